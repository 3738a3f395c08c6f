#include "geopatch/patching.hpp"

#include "geopatch/error.hpp"

namespace geopatch {
namespace {

std::size_t source_position(const PromptPair& pair, std::size_t offset) {
    const auto& a = pair.alignment;
    const std::size_t pos = a.position_of_offset(offset);
    if (offset >= a.report_width() || pos >= a.clean_len || pos >= a.corrupted_len) {
        throw Error(ErrorKind::SourceUnavailable, "offset " + std::to_string(offset) + " has no clean source position in '" +
                                                      pair.placename + "' (" + pair.distance.text + ")");
    }
    return pos;
}

void check_window(const Model& model, LayerWindow w) {
    if (w.start > w.end || w.end >= model.config().n_layers) {
        throw Error(ErrorKind::WindowTooWide, "layer window [" + std::to_string(w.start) + ", " + std::to_string(w.end) +
                                                  "] outside a " + std::to_string(model.config().n_layers) +
                                                  "-layer model");
    }
}

PatchSpec window_patch(const ActivationCache& clean, LayerWindow w, HookSite site, std::size_t pos) {
    PatchSpec spec;
    for (std::size_t l = w.start; l <= w.end; ++l) {
        const HookId id{static_cast<int>(l), site};
        spec.add(id, pos, clean.at(id).row(pos));
    }
    return spec;
}

EffectRecord make_record(const PromptPair& pair, std::size_t offset, LayerWindow w, const EffectScores& s) {
    return {pair.placename, pair.distance, offset, w, s.kl_corrupted, s.kl_patched, s.effect};
}

} // namespace

std::vector<LayerWindow> sliding_windows(std::size_t n_layers, std::size_t width) {
    if (width < 1) throw Error(ErrorKind::WindowTooWide, "window width must be at least 1");
    if (width > n_layers) {
        throw Error(ErrorKind::WindowTooWide, "window width " + std::to_string(width) + " exceeds " +
                                                  std::to_string(n_layers) + " layers");
    }
    std::vector<LayerWindow> out;
    for (std::size_t s = 0; s + width <= n_layers; ++s) out.push_back({s, s + width - 1});
    return out;
}

std::string_view to_string(KlOrder order) {
    return order == KlOrder::target_from_clean ? "target_from_clean" : "clean_from_target";
}

KlOrder parse_kl_order(std::string_view name) {
    if (name == "target_from_clean") return KlOrder::target_from_clean;
    if (name == "clean_from_target") return KlOrder::clean_from_target;
    throw Error(ErrorKind::InvalidConfig, "unknown KL order '" + std::string(name) + "'");
}

EffectScores effect_metric(const ProbDist& clean, const ProbDist& corrupted, const ProbDist& patched, KlOrder order) {
    if (clean.size() != corrupted.size() || clean.size() != patched.size()) {
        throw Error(ErrorKind::InvalidShape, "effect_metric: distributions differ in length");
    }
    EffectScores s;
    if (order == KlOrder::target_from_clean) {
        s.kl_corrupted = kl_divergence_checked(corrupted, clean);
        s.kl_patched = kl_divergence_checked(patched, clean);
    } else {
        s.kl_corrupted = kl_divergence_checked(clean, corrupted);
        s.kl_patched = kl_divergence_checked(clean, patched);
    }
    s.effect = s.kl_corrupted - s.kl_patched;
    return s;
}

EffectRecord run_pair(const Model& model, const PromptPair& pair, LayerWindow window, HookSite site,
                      std::size_t offset, KlOrder order) {
    check_window(model, window);
    const std::size_t pos = source_position(pair, offset);

    CaptureSet capture;
    for (std::size_t l = window.start; l <= window.end; ++l) capture.insert({static_cast<int>(l), site});
    const auto clean = model.forward(pair.clean_tokens.ids, capture);
    const auto corrupted = model.forward(pair.corrupted_tokens.ids);
    const auto patched = model.forward(pair.corrupted_tokens.ids, {}, window_patch(clean.cache, window, site, pos));

    const auto scores = effect_metric(next_token_distribution(clean.logits), next_token_distribution(corrupted.logits),
                                      next_token_distribution(patched.logits), order);
    return make_record(pair, offset, window, scores);
}

ExecutionPlan cache_reuse_plan(const PromptPair& pair, std::vector<LayerWindow> windows,
                               std::vector<std::size_t> offsets) {
    if (windows.empty() || offsets.empty()) {
        throw Error(ErrorKind::InvalidPlan, "execution plan needs at least one window and one offset");
    }
    for (const auto o : offsets) source_position(pair, o);
    return {std::move(windows), std::move(offsets)};
}

std::vector<EffectRecord> execute_plan(const Model& model, const PromptPair& pair, const ExecutionPlan& plan,
                                       HookSite site, KlOrder order) {
    if (plan.windows.empty() || plan.offsets.empty()) {
        throw Error(ErrorKind::InvalidPlan, "execution plan needs at least one window and one offset");
    }
    CaptureSet clean_capture;
    CaptureSet corrupted_capture;
    for (const auto& w : plan.windows) {
        check_window(model, w);
        for (std::size_t l = w.start; l <= w.end; ++l) clean_capture.insert({static_cast<int>(l), site});
        corrupted_capture.insert({static_cast<int>(w.start), HookSite::resid_pre});
    }

    ForwardOptions last_row;
    last_row.logit_rows = LogitRows::last;
    const auto clean = model.forward(pair.clean_tokens.ids, clean_capture, {}, last_row);
    const auto corrupted = model.forward(pair.corrupted_tokens.ids, corrupted_capture, {}, last_row);
    const ProbDist p_clean = next_token_distribution(clean.logits);
    const ProbDist p_corrupted = next_token_distribution(corrupted.logits);

    std::vector<EffectRecord> records;
    records.reserve(plan.windows.size() * plan.offsets.size());
    for (const auto offset : plan.offsets) {
        const std::size_t pos = source_position(pair, offset);
        for (const auto& w : plan.windows) {
            ForwardOptions resume = last_row;
            resume.start_layer = w.start;
            resume.start_residual = &corrupted.cache.at({static_cast<int>(w.start), HookSite::resid_pre});
            const auto patched = model.forward(pair.corrupted_tokens.ids, {}, window_patch(clean.cache, w, site, pos), resume);
            const auto scores = effect_metric(p_clean, p_corrupted, next_token_distribution(patched.logits), order);
            records.push_back(make_record(pair, offset, w, scores));
        }
    }
    return records;
}

} // namespace geopatch
