#pragma once

#include "geopatch/model.hpp"
#include "geopatch/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// Small self-contained assets for desk-scale runs and tests: a byte-level BPE
// vocabulary trained on the prompt corpus and a randomly initialised model.
namespace geopatch::toy {

// Greedy byte-level BPE training: repeatedly merges the most frequent adjacent
// pair (ties broken bytewise) until no pair occurs twice or max_merges is hit.
Vocab train_bpe(std::span<const std::string> texts, std::size_t max_merges);

// Every clean and corrupted prompt for the given placenames.
std::vector<std::string> prompt_texts(std::span<const std::string> placenames);

ModelConfig default_config(std::size_t vocab_size);

// Embeddings ~ N(0, 1), projections ~ N(0, 1/fan_in), layer-norm gains near 1.
ParameterStore random_parameters(const ModelConfig& config, std::uint64_t seed);

struct Assets {
    ModelConfig config;
    ParameterStore params;
    Vocab vocab;
};

Assets make_assets(std::span<const std::string> placenames, std::uint64_t seed = 20260603);

// Writes config.json, weights.safetensors, names.json, vocab.json, merges.txt.
void write_assets(const Assets& assets, const std::filesystem::path& dir);

} // namespace geopatch::toy
