#pragma once

#include "geopatch/corpus.hpp"
#include "geopatch/model.hpp"
#include "geopatch/numerics.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace geopatch {

// Contiguous band of layers [start, end], patched together.
struct LayerWindow {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t width() const { return end - start + 1; }
    friend bool operator==(const LayerWindow&, const LayerWindow&) = default;
};

// Full-width windows only, starts 0 .. n_layers - width.
std::vector<LayerWindow> sliding_windows(std::size_t n_layers, std::size_t width);

// Which slot the clean distribution takes in both divergences.
enum class KlOrder {
    target_from_clean, // KL(target || clean)
    clean_from_target, // KL(clean || target)
};

std::string_view to_string(KlOrder order);
KlOrder parse_kl_order(std::string_view name);

struct EffectScores {
    double kl_corrupted = 0.0;
    double kl_patched = 0.0;
    double effect = 0.0; // kl_corrupted - kl_patched; > 0 means patching moved toward clean
};

EffectScores effect_metric(const ProbDist& clean, const ProbDist& corrupted, const ProbDist& patched,
                           KlOrder order = KlOrder::target_from_clean);

struct EffectRecord {
    std::string placename;
    DistancePhrase distance;
    std::size_t offset = 0; // token offset from the "located" anchor
    LayerWindow window;
    double kl_corrupted = 0.0;
    double kl_patched = 0.0;
    double effect = 0.0;
};

// One cell, three full forward passes: clean with capture, corrupted, and
// corrupted with the clean activations at (anchor + offset) injected at site
// for every layer in window.
EffectRecord run_pair(const Model& model, const PromptPair& pair, LayerWindow window, HookSite site,
                      std::size_t offset, KlOrder order = KlOrder::target_from_clean);

// Shares the clean and corrupted passes across all (offset, window) cells of
// one pair: 2 + |offsets| * |windows| forward passes.
struct ExecutionPlan {
    std::vector<LayerWindow> windows;
    std::vector<std::size_t> offsets;

    std::size_t forward_passes() const { return 2 + windows.size() * offsets.size(); }
};

ExecutionPlan cache_reuse_plan(const PromptPair& pair, std::vector<LayerWindow> windows,
                               std::vector<std::size_t> offsets);

// Records ordered offset-major, then window. Patched passes resume from the
// corrupted residual at the window's first layer; layers below it are
// untouched by the patch, so the result is bitwise that of a full pass.
std::vector<EffectRecord> execute_plan(const Model& model, const PromptPair& pair, const ExecutionPlan& plan,
                                       HookSite site, KlOrder order = KlOrder::target_from_clean);

} // namespace geopatch
