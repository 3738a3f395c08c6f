#pragma once

#include "geopatch/corpus.hpp"
#include "geopatch/model.hpp"
#include "geopatch/patching.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geopatch {

struct ExperimentConfig {
    std::filesystem::path weights;
    std::filesystem::path model_config;
    std::filesystem::path name_map; // optional
    std::filesystem::path vocab;
    std::filesystem::path merges;
    std::filesystem::path corpus;
    HookSite site = HookSite::mlp_out;
    std::size_t window_width = 5;
    KlOrder kl_order = KlOrder::target_from_clean;
    std::size_t workers = 1;
    std::size_t limit_placenames = 0; // 0 = all
    std::filesystem::path out_json;
    std::filesystem::path out_csv; // optional raw records

    void validate() const;
};

// Keys mirror the struct fields; relative paths resolve against base_dir.
ExperimentConfig parse_experiment_config(std::istream& json, const std::filesystem::path& base_dir = {});

// What run_experiment needs once everything is loaded.
struct RunSettings {
    HookSite site = HookSite::mlp_out;
    std::size_t window_width = 5;
    KlOrder kl_order = KlOrder::target_from_clean;
    std::size_t workers = 1;
    bool keep_raw = true;
    const Vocab* vocab = nullptr; // for offset token labels; optional
};

struct OffsetTokens {
    std::string clean;
    std::string corrupted;
};

// Mean patching effect over placenames, indexed [distance][offset][window].
struct EffectMatrix {
    std::vector<DistancePhrase> distances;
    std::vector<std::size_t> offsets;
    std::vector<std::vector<OffsetTokens>> offset_tokens; // [distance][offset], first placename's tokens
    std::vector<LayerWindow> windows;
    std::vector<std::string> placenames;
    std::vector<std::vector<std::vector<double>>> mean_effect;
    std::size_t count = 0;
    HookSite site = HookSite::mlp_out;
    std::size_t window_width = 0;
    KlOrder kl_order = KlOrder::target_from_clean;
    std::uint64_t forward_passes = 0;
    std::string config_echo; // JSON object text, may be empty
    std::vector<EffectRecord> raw; // sorted (placename, miles, offset, window)

    double at(std::size_t d, std::size_t o, std::size_t w) const { return mean_effect[d][o][w]; }
};

EffectMatrix run_experiment(const Model& model, std::span<const PromptPair> pairs, const RunSettings& settings);

// Loads model, tokenizer, and corpus (any failure aborts before compute),
// then runs and writes the configured outputs.
EffectMatrix run_experiment(const ExperimentConfig& config);

std::string default_config_echo(const ExperimentConfig& config, const ModelConfig& model);

// Rounds to the 9 significant digits the output files carry.
double round_sig9(double v);

std::string matrix_to_json(const EffectMatrix& matrix);
EffectMatrix matrix_from_json(std::istream& json);
EffectMatrix read_matrix(const std::filesystem::path& json_path);

void write_raw_csv(const EffectMatrix& matrix, std::ostream& out);
void write_matrix(const EffectMatrix& matrix, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path = {});

} // namespace geopatch
