#pragma once

#include "geopatch/runner.hpp"

#include <filesystem>
#include <string>

namespace geopatch {

struct HeatmapOptions {
    double clip_percentile = 99.0; // of |effect|; colours saturate beyond it
    int cell_width = 18;
    int cell_height = 12;
    std::string title = "Mean patching effect";
};

// Diverging scale: blue below zero, the neutral midpoint at zero, red above.
inline constexpr const char* kMidpointColor = "#f7f7f7";
std::string effect_color(double value, double clip);

// Nearest-rank percentile of |mean_effect|.
double effect_clip(const EffectMatrix& matrix, double percentile);

// Static SVG: one row per (distance, offset), distances ascending top to
// bottom with right-side group labels, offsets in token order with left-side
// labels, one column per window start layer, plus a numeric legend.
std::string render_heatmap_svg(const EffectMatrix& matrix, const HeatmapOptions& options = {});
void render_heatmap(const EffectMatrix& matrix, const std::filesystem::path& svg_path, const HeatmapOptions& options = {});

} // namespace geopatch
