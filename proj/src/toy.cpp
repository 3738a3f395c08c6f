#include "geopatch/toy.hpp"

#include "geopatch/corpus.hpp"
#include "geopatch/error.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace geopatch::toy {

Vocab train_bpe(std::span<const std::string> texts, std::size_t max_merges) {
    std::map<std::vector<std::string>, std::size_t> words;
    for (const auto& text : texts) {
        for (const auto span : pretokenize(text)) {
            std::vector<std::string> symbols;
            for (std::size_t b = span.begin; b < span.end; ++b) symbols.push_back(byte_to_symbol(static_cast<unsigned char>(text[b])));
            ++words[symbols];
        }
    }

    std::unordered_map<std::string, TokenId> token_to_id;
    for (unsigned b = 0; b < 256; ++b) token_to_id.emplace(byte_to_symbol(static_cast<unsigned char>(b)), static_cast<TokenId>(b));
    std::vector<std::pair<std::string, std::string>> merges;

    while (merges.size() < max_merges) {
        std::map<std::pair<std::string, std::string>, std::size_t> counts;
        for (const auto& [symbols, n] : words) {
            for (std::size_t k = 0; k + 1 < symbols.size(); ++k) counts[{symbols[k], symbols[k + 1]}] += n;
        }
        const std::pair<std::string, std::string>* best = nullptr;
        std::size_t best_count = 1;
        for (const auto& [pair, n] : counts) {
            if (n > best_count) {
                best = &pair;
                best_count = n;
            }
        }
        if (!best) break;
        const auto [left, right] = *best;
        merges.emplace_back(left, right);
        const std::string joined = left + right;
        token_to_id.emplace(joined, static_cast<TokenId>(token_to_id.size()));

        std::map<std::vector<std::string>, std::size_t> next;
        for (const auto& [symbols, n] : words) {
            std::vector<std::string> merged;
            for (std::size_t k = 0; k < symbols.size(); ++k) {
                if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
                    merged.push_back(joined);
                    ++k;
                } else {
                    merged.push_back(symbols[k]);
                }
            }
            next[merged] += n;
        }
        words = std::move(next);
    }
    return make_vocab(std::move(token_to_id), std::move(merges));
}

std::vector<std::string> prompt_texts(std::span<const std::string> placenames) {
    std::vector<std::string> texts;
    for (const auto& name : placenames) {
        texts.push_back(clean_prompt(name));
        for (const auto& phrase : distance_phrases()) texts.push_back(corrupted_prompt(name, phrase));
    }
    return texts;
}

ModelConfig default_config(std::size_t vocab_size) {
    ModelConfig c;
    c.n_layers = 4;
    c.d_model = 32;
    c.n_heads = 4;
    c.d_head = 8;
    c.d_mlp = 64;
    c.vocab_size = vocab_size;
    c.max_seq = 64;
    c.norm_eps = 1e-5f;
    c.activation = GeluForm::tanh_approx;
    c.tie_embeddings = false;
    return c;
}

ParameterStore random_parameters(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    ParameterStore store;
    for (const auto& [name, shape] : expected_tensors(config)) {
        const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
        Tensor2 t(rows, shape.back());
        double mean = 0.0;
        double stddev;
        if (name == "embed.W" || name == "pos.W") {
            stddev = 1.0;
        } else if (name.ends_with(".g")) {
            mean = 1.0;
            stddev = 0.1;
        } else if (shape.size() == 1) {
            stddev = 0.1;
        } else {
            stddev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
            if (name == "unembed.W") stddev *= 2.0; // sharper next-token distributions
        }
        std::normal_distribution<double> dist(mean, stddev);
        for (float& v : t.data) v = static_cast<float>(dist(rng));
        store.emplace(name, std::move(t));
    }
    return store;
}

Assets make_assets(std::span<const std::string> placenames, std::uint64_t seed) {
    Assets a;
    a.vocab = train_bpe(prompt_texts(placenames), 2000);
    a.config = default_config(a.vocab.size());
    a.params = random_parameters(a.config, seed);
    return a;
}

void write_assets(const Assets& assets, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("config.json");
        out << to_json(assets.config) << '\n';
    }
    archive::write(dir / "weights.safetensors", to_archive_entries(assets.params));
    {
        auto out = open("names.json");
        out << "{}\n";
    }
    {
        auto vj = open("vocab.json");
        auto mt = open("merges.txt");
        write_vocab(assets.vocab, vj, mt);
    }
}

} // namespace geopatch::toy
