#pragma once

#include "geopatch/archive.hpp"
#include "geopatch/numerics.hpp"
#include "geopatch/tensor.hpp"
#include "geopatch/tokenizer.hpp"

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geopatch {

struct ModelConfig {
    std::size_t n_layers = 1;
    std::size_t d_model = 1;
    std::size_t n_heads = 1;
    std::size_t d_head = 1;
    std::size_t d_mlp = 1;
    std::size_t vocab_size = 1;
    std::size_t max_seq = 1;
    float norm_eps = 1e-5f;
    GeluForm activation = GeluForm::tanh_approx;
    bool tie_embeddings = false;

    // Throws InvalidConfig naming the first violated constraint.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig parse_model_config(std::istream& json);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string to_json(const ModelConfig& config);

// Canonical tensor name -> weights. Vectors are 1 x n.
using ParameterStore = std::map<std::string, Tensor2>;

// Canonical names and archive shapes (vectors are rank 1) the config requires.
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const ModelConfig& config);

// checkpoint name -> canonical name; names absent from the map pass through.
using NameMap = std::map<std::string, std::string>;

NameMap parse_name_map(std::istream& json);
NameMap load_name_map(const std::filesystem::path& path);

ParameterStore load_weights(std::istream& archive, const ModelConfig& config, const NameMap& names = {});
ParameterStore load_weights(const std::filesystem::path& archive, const ModelConfig& config,
                            const NameMap& names = {});

// Inverse of load_weights for canonical names.
archive::Entries to_archive_entries(const ParameterStore& params);

enum class HookSite : std::uint8_t { resid_pre, attn_out, mlp_out, resid_post };

std::string_view to_string(HookSite site);
HookSite parse_hook_site(std::string_view name);

// A computation site. Per-layer sites use layer in [0, n_layers). Two
// sentinels address the stream outside the blocks: kEmbedLayer is the summed
// token + position embedding, kFinalLayer is the final layer-norm output that
// feeds the unembedding; both use site resid_post.
struct HookId {
    static constexpr int kEmbedLayer = -1;
    static constexpr int kFinalLayer = -2;

    int layer = 0;
    HookSite site = HookSite::resid_pre;

    static HookId embed() { return {kEmbedLayer, HookSite::resid_post}; }
    static HookId final_norm() { return {kFinalLayer, HookSite::resid_post}; }

    friend auto operator<=>(const HookId&, const HookId&) = default;
};

std::string to_string(const HookId& hook); // "layer.3.mlp_out", "embed", "final"

using CaptureSet = std::set<HookId>;
using ActivationCache = std::map<HookId, Tensor2>; // each [seq_len, d_model]

struct PatchEntry {
    HookId hook;
    std::size_t position = 0;
    std::vector<float> vector;
};

// Row replacements applied during a forward pass. A patched row replaces the
// computed activation before anything downstream reads it.
struct PatchSpec {
    std::vector<PatchEntry> entries;

    bool empty() const { return entries.empty(); }
    void add(HookId hook, std::size_t position, std::span<const float> values) {
        entries.push_back({hook, position, {values.begin(), values.end()}});
    }
};

enum class LogitRows { all, last };

struct ForwardOptions {
    LogitRows logit_rows = LogitRows::all;
    // Resume from a residual stream entering block start_layer (its resid_pre
    // before patching), skipping the embedding and earlier blocks.
    std::size_t start_layer = 0;
    const Tensor2* start_residual = nullptr;
};

struct ForwardResult {
    Tensor2 logits; // [seq, vocab], or [1, vocab] for LogitRows::last
    ActivationCache cache;
};

// Pre-norm GPT-2 style decoder with learned absolute positions. Immutable
// after construction; forward() may be called concurrently.
class Model {
public:
    Model(ModelConfig config, ParameterStore params);

    const ModelConfig& config() const { return config_; }
    const ParameterStore& params() const { return params_; }

    ForwardResult forward(std::span<const TokenId> tokens, const CaptureSet& capture = {},
                          const PatchSpec& patch = {}, const ForwardOptions& options = {}) const;

    // Number of forward() calls so far, including resumed ones.
    std::uint64_t forward_count() const { return forward_count_.load(std::memory_order_relaxed); }
    void reset_forward_count() { forward_count_.store(0, std::memory_order_relaxed); }

private:
    struct Layer {
        const Tensor2* ln1_g;
        const Tensor2* ln1_b;
        const Tensor2* wq;
        const Tensor2* bq;
        const Tensor2* wk;
        const Tensor2* bk;
        const Tensor2* wv;
        const Tensor2* bv;
        const Tensor2* wo;
        const Tensor2* bo;
        const Tensor2* ln2_g;
        const Tensor2* ln2_b;
        const Tensor2* w_in;
        const Tensor2* b_in;
        const Tensor2* w_out;
        const Tensor2* b_out;
    };

    const Tensor2& param(const std::string& name) const;

    ModelConfig config_;
    ParameterStore params_;
    const Tensor2* embed_ = nullptr;
    const Tensor2* pos_ = nullptr;
    const Tensor2* final_g_ = nullptr;
    const Tensor2* final_b_ = nullptr;
    const Tensor2* unembed_ = nullptr; // null when tied
    std::vector<Layer> layers_;
    mutable std::atomic<std::uint64_t> forward_count_{0};
};

// Softmax over the full vocabulary of the final logit row.
ProbDist next_token_distribution(const Tensor2& logits);

} // namespace geopatch
