#include "geopatch/heatmap.hpp"

#include "geopatch/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace geopatch {
namespace {

struct Rgb {
    double r, g, b;
};

constexpr Rgb kNegative{33, 102, 172};  // #2166ac
constexpr Rgb kMid{247, 247, 247};      // #f7f7f7
constexpr Rgb kPositive{178, 24, 43};   // #b2182b

std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c.r)), static_cast<int>(std::lround(c.g)),
                  static_cast<int>(std::lround(c.b)));
    return buf;
}

Rgb mix(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string quoted_token(const std::string& t) { return "'" + t + "'"; }

} // namespace

std::string effect_color(double value, double clip) {
    if (!(clip > 0.0) || value == 0.0) return kMidpointColor;
    const double t = std::clamp(value / clip, -1.0, 1.0);
    return hex(t > 0 ? mix(kMid, kPositive, t) : mix(kMid, kNegative, -t));
}

double effect_clip(const EffectMatrix& m, double percentile) {
    std::vector<double> mags;
    for (const auto& plane : m.mean_effect) {
        for (const auto& row : plane) {
            for (const double v : row) mags.push_back(std::abs(v));
        }
    }
    if (mags.empty()) return 0.0;
    std::sort(mags.begin(), mags.end());
    const double rank = std::ceil(std::clamp(percentile, 0.0, 100.0) / 100.0 * static_cast<double>(mags.size()));
    const std::size_t idx = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
    return mags[std::min(idx, mags.size() - 1)];
}

std::string render_heatmap_svg(const EffectMatrix& m, const HeatmapOptions& opt) {
    const std::size_t n_dist = m.distances.size();
    const std::size_t n_off = m.offsets.size();
    const std::size_t n_win = m.windows.size();
    if (n_dist == 0 || n_off == 0 || n_win == 0) throw Error(ErrorKind::NothingToRender, "effect matrix is empty");

    // Distances top to bottom by ascending miles.
    std::vector<std::size_t> dist_order(n_dist);
    for (std::size_t i = 0; i < n_dist; ++i) dist_order[i] = i;
    std::stable_sort(dist_order.begin(), dist_order.end(),
                     [&](std::size_t a, std::size_t b) { return m.distances[a].miles < m.distances[b].miles; });

    const double clip = effect_clip(m, opt.clip_percentile);
    const int cw = opt.cell_width;
    const int ch = opt.cell_height;
    const int gap = 4;
    const int left = 170;
    const int top = 56;
    const int right = 150;
    const int grid_w = cw * static_cast<int>(n_win);
    const int grid_h = static_cast<int>(n_dist * n_off) * ch + static_cast<int>(n_dist - 1) * gap;
    const int legend_top = top + grid_h + 36;
    const int width = left + grid_w + right;
    const int height = legend_top + 56;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"10\">\n"
        << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n"
        << "<text class=\"title\" x=\"" << left << "\" y=\"18\" font-size=\"13\">" << escape(opt.title) << " ("
        << escape(std::string(to_string(m.site))) << ", " << m.window_width << "-layer windows, n=" << m.count
        << ")</text>\n";

    svg << "<g class=\"x-axis\">\n"
        << "<text x=\"" << left + grid_w / 2 << "\" y=\"36\" text-anchor=\"middle\">window start layer</text>\n";
    for (std::size_t w = 0; w < n_win; ++w) {
        svg << "<text x=\"" << left + static_cast<int>(w) * cw + cw / 2 << "\" y=\"" << top - 6
            << "\" text-anchor=\"middle\">" << m.windows[w].start << "</text>\n";
    }
    svg << "</g>\n";

    svg << "<g class=\"cells\">\n";
    for (std::size_t gi = 0; gi < n_dist; ++gi) {
        const std::size_t d = dist_order[gi];
        const int group_y = top + static_cast<int>(gi * n_off) * ch + static_cast<int>(gi) * gap;
        for (std::size_t o = 0; o < n_off; ++o) {
            const int y = group_y + static_cast<int>(o) * ch;
            for (std::size_t w = 0; w < n_win; ++w) {
                const double v = m.mean_effect[d][o][w];
                svg << "<rect class=\"cell\" x=\"" << left + static_cast<int>(w) * cw << "\" y=\"" << y << "\" width=\""
                    << cw << "\" height=\"" << ch << "\" fill=\"" << effect_color(v, clip) << "\"><title>"
                    << escape(m.distances[d].text) << ", offset " << m.offsets[o] << ", layers " << m.windows[w].start
                    << "-" << m.windows[w].end << ": " << num(v) << "</title></rect>\n";
            }
        }
    }
    svg << "</g>\n";

    svg << "<g class=\"row-labels\">\n";
    for (std::size_t gi = 0; gi < n_dist; ++gi) {
        const std::size_t d = dist_order[gi];
        const int group_y = top + static_cast<int>(gi * n_off) * ch + static_cast<int>(gi) * gap;
        for (std::size_t o = 0; o < n_off; ++o) {
            std::string label = std::to_string(m.offsets[o]);
            if (d < m.offset_tokens.size() && o < m.offset_tokens[d].size()) {
                const auto& t = m.offset_tokens[d][o];
                label += "  " + quoted_token(t.corrupted) + " ← " + quoted_token(t.clean);
            }
            svg << "<text x=\"" << left - 6 << "\" y=\"" << group_y + static_cast<int>(o) * ch + ch - 3
                << "\" text-anchor=\"end\">" << escape(label) << "</text>\n";
        }
        svg << "<text class=\"group-label\" x=\"" << left + grid_w + 8 << "\" y=\""
            << group_y + static_cast<int>(n_off) * ch / 2 + 4 << "\">" << escape(m.distances[d].text) << "</text>\n";
    }
    svg << "</g>\n";

    // Legend: 21 swatches from -clip to +clip.
    const int swatches = 21;
    const int sw = 10;
    svg << "<g class=\"legend\">\n";
    for (int i = 0; i < swatches; ++i) {
        const double v = clip * (2.0 * i / (swatches - 1) - 1.0);
        svg << "<rect class=\"legend-swatch\" x=\"" << left + i * sw << "\" y=\"" << legend_top << "\" width=\"" << sw
            << "\" height=\"12\" fill=\"" << effect_color(v, clip) << "\"/>\n";
    }
    const int legend_y = legend_top + 24;
    svg << "<text x=\"" << left << "\" y=\"" << legend_y << "\" text-anchor=\"start\">" << num(-clip) << "</text>\n"
        << "<text x=\"" << left + swatches * sw / 2 << "\" y=\"" << legend_y << "\" text-anchor=\"middle\">0</text>\n"
        << "<text x=\"" << left + swatches * sw << "\" y=\"" << legend_y << "\" text-anchor=\"end\">" << num(clip)
        << "</text>\n"
        << "<text x=\"" << left + swatches * sw + 12 << "\" y=\"" << legend_top + 10
        << "\">effect = KL(corrupted) - KL(patched), nats</text>\n"
        << "</g>\n"
        << "</svg>\n";
    return svg.str();
}

void render_heatmap(const EffectMatrix& m, const std::filesystem::path& svg_path, const HeatmapOptions& options) {
    const std::string text = render_heatmap_svg(m, options);
    std::ofstream out(svg_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + svg_path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::Io, "failed writing " + svg_path.string());
}

} // namespace geopatch
