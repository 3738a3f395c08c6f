#include "geopatch/runner.hpp"

#include "geopatch/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace geopatch {
namespace {

std::string format_sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

void ExperimentConfig::validate() const {
    if (window_width < 1) throw Error(ErrorKind::InvalidConfig, "window_width must be >= 1");
    if (workers < 1) throw Error(ErrorKind::InvalidConfig, "workers must be >= 1");
    for (const auto* p : {&weights, &model_config, &vocab, &merges, &corpus}) {
        if (p->empty()) throw Error(ErrorKind::InvalidConfig, "experiment config is missing an input path");
        if (!std::filesystem::exists(*p)) throw Error(ErrorKind::Io, "input file not found: " + p->string());
    }
    if (!name_map.empty() && !std::filesystem::exists(name_map)) {
        throw Error(ErrorKind::Io, "input file not found: " + name_map.string());
    }
}

ExperimentConfig parse_experiment_config(std::istream& json, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    try {
        const auto doc = nlohmann::json::parse(json);
        auto path = [&](const char* key) { return resolve(base_dir, doc.value(key, std::string())); };
        c.weights = path("weights");
        c.model_config = path("model_config");
        c.name_map = path("name_map");
        c.vocab = path("vocab");
        c.merges = path("merges");
        c.corpus = path("corpus");
        c.out_json = path("out_json");
        c.out_csv = path("out_csv");
        c.site = parse_hook_site(doc.value("site", std::string("mlp_out")));
        c.window_width = doc.value("window_width", std::size_t{5});
        c.kl_order = parse_kl_order(doc.value("kl_order", std::string("target_from_clean")));
        c.workers = doc.value("workers", std::size_t{1});
        c.limit_placenames = doc.value("limit_placenames", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("experiment config: ") + e.what());
    }
    return c;
}

double round_sig9(double v) { return std::strtod(format_sig9(v).c_str(), nullptr); }

EffectMatrix run_experiment(const Model& model, std::span<const PromptPair> pairs, const RunSettings& settings) {
    if (pairs.empty()) throw Error(ErrorKind::CorpusBuildError, "no prompt pairs to run");
    const auto windows = sliding_windows(model.config().n_layers, settings.window_width);
    const std::size_t width = pairs.front().alignment.report_width();
    std::vector<std::size_t> offsets(width);
    for (std::size_t o = 0; o < width; ++o) offsets[o] = o;

    // Deterministic work order: (placename, miles); results land in fixed slots.
    std::vector<const PromptPair*> order;
    for (const auto& p : pairs) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(), [](const PromptPair* a, const PromptPair* b) {
        if (a->placename != b->placename) return a->placename < b->placename;
        return a->distance.miles < b->distance.miles;
    });

    std::vector<ExecutionPlan> plans;
    plans.reserve(order.size());
    for (const auto* p : order) {
        if (p->alignment.report_width() != width) {
            throw Error(ErrorKind::CorpusBuildError, "placename '" + p->placename + "' has a different token-offset width");
        }
        plans.push_back(cache_reuse_plan(*p, windows, offsets));
    }

    std::vector<std::vector<EffectRecord>> results(order.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::uint64_t passes_before = model.forward_count();

    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= order.size()) return;
            try {
                results[i] = execute_plan(model, *order[i], plans[i], settings.site, settings.kl_order);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
            }
        }
    };
    const std::size_t n_workers = std::clamp<std::size_t>(settings.workers, 1, order.size());
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    EffectMatrix m;
    m.site = settings.site;
    m.window_width = settings.window_width;
    m.kl_order = settings.kl_order;
    m.windows = windows;
    m.offsets = offsets;
    m.forward_passes = model.forward_count() - passes_before;

    std::map<int, std::size_t> distance_index;
    for (const auto* p : order) {
        if (!distance_index.contains(p->distance.miles)) distance_index.emplace(p->distance.miles, 0);
        if (m.placenames.empty() || m.placenames.back() != p->placename) m.placenames.push_back(p->placename);
    }
    for (auto& [miles, idx] : distance_index) {
        idx = m.distances.size();
        // Labels come from the first placename carrying this distance.
        const auto* p = *std::find_if(order.begin(), order.end(), [&](const PromptPair* q) { return q->distance.miles == miles; });
        m.distances.push_back(p->distance);
        if (settings.vocab) {
            std::vector<OffsetTokens> labels;
            for (const auto o : offsets) {
                const std::size_t pos = p->alignment.position_of_offset(o);
                labels.push_back({token_text(*settings.vocab, p->clean_tokens.ids[pos]),
                                  token_text(*settings.vocab, p->corrupted_tokens.ids[pos])});
            }
            m.offset_tokens.push_back(std::move(labels));
        }
    }
    m.count = m.placenames.size();

    // Sum in placename order, then divide: fixed reduction order.
    std::vector<std::vector<std::vector<double>>> sums(
        m.distances.size(), std::vector<std::vector<double>>(width, std::vector<double>(windows.size(), 0.0)));
    std::vector<std::size_t> per_distance(m.distances.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t d = distance_index.at(order[i]->distance.miles);
        ++per_distance[d];
        for (const auto& r : results[i]) {
            const std::size_t w = static_cast<std::size_t>(
                std::find(windows.begin(), windows.end(), r.window) - windows.begin());
            sums[d][r.offset][w] += r.effect;
        }
    }
    m.mean_effect = sums;
    for (std::size_t d = 0; d < m.distances.size(); ++d) {
        if (per_distance[d] != m.count) {
            throw Error(ErrorKind::CorpusBuildError, "distance '" + m.distances[d].text + "' is missing for some placenames");
        }
        for (auto& row : m.mean_effect[d]) {
            for (auto& v : row) v /= static_cast<double>(m.count);
        }
    }
    if (settings.keep_raw) {
        for (auto& batch : results) {
            for (auto& r : batch) m.raw.push_back(std::move(r));
        }
    }
    return m;
}

EffectMatrix run_experiment(const ExperimentConfig& config) {
    config.validate();
    const ModelConfig model_config = load_model_config(config.model_config);
    sliding_windows(model_config.n_layers, config.window_width);
    const NameMap names = config.name_map.empty() ? NameMap{} : load_name_map(config.name_map);
    auto params = load_weights(config.weights, model_config, names);
    const Model model(model_config, std::move(params));
    const Vocab vocab = load_vocab(config.vocab, config.merges);
    if (vocab.size() > model_config.vocab_size) {
        throw Error(ErrorKind::InvalidConfig, "tokenizer has " + std::to_string(vocab.size()) +
                                                  " tokens but the model only " + std::to_string(model_config.vocab_size));
    }
    const Corpus corpus = load_corpus(config.corpus);
    const auto pairs = tokenize_corpus(corpus, vocab, config.limit_placenames);
    for (const auto& p : pairs) {
        if (p.corrupted_tokens.size() > model_config.max_seq) {
            throw Error(ErrorKind::InvalidConfig, "prompt for '" + p.placename + "' exceeds max_seq");
        }
    }

    RunSettings settings;
    settings.site = config.site;
    settings.window_width = config.window_width;
    settings.kl_order = config.kl_order;
    settings.workers = config.workers;
    settings.keep_raw = true;
    settings.vocab = &vocab;
    EffectMatrix m = run_experiment(model, pairs, settings);
    m.config_echo = default_config_echo(config, model_config);

    if (!config.out_json.empty()) write_matrix(m, config.out_json, config.out_csv);
    return m;
}

std::string default_config_echo(const ExperimentConfig& config, const ModelConfig& model) {
    nlohmann::ordered_json doc;
    doc["weights"] = config.weights.filename().string();
    doc["model_config"] = nlohmann::ordered_json::parse(to_json(model));
    doc["corpus"] = config.corpus.filename().string();
    doc["site"] = std::string(to_string(config.site));
    doc["window_width"] = config.window_width;
    doc["kl_order"] = std::string(to_string(config.kl_order));
    doc["limit_placenames"] = config.limit_placenames;
    return doc.dump();
}

std::string matrix_to_json(const EffectMatrix& m) {
    nlohmann::ordered_json doc;
    doc["count"] = m.count;
    doc["site"] = std::string(to_string(m.site));
    doc["window_width"] = m.window_width;
    doc["kl_order"] = std::string(to_string(m.kl_order));
    doc["forward_passes"] = m.forward_passes;
    doc["config"] = m.config_echo.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(m.config_echo);
    doc["placenames"] = m.placenames;
    doc["distances"] = nlohmann::ordered_json::array();
    for (const auto& d : m.distances) doc["distances"].push_back({{"text", d.text}, {"miles", d.miles}});
    doc["offsets"] = m.offsets;
    doc["offset_tokens"] = nlohmann::ordered_json::array();
    for (const auto& row : m.offset_tokens) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& t : row) arr.push_back({{"clean", t.clean}, {"corrupted", t.corrupted}});
        doc["offset_tokens"].push_back(arr);
    }
    doc["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : m.windows) doc["windows"].push_back({{"start", w.start}, {"end", w.end}});
    doc["mean_effect"] = nlohmann::ordered_json::array();
    for (const auto& plane : m.mean_effect) {
        auto p = nlohmann::ordered_json::array();
        for (const auto& row : plane) {
            auto r = nlohmann::ordered_json::array();
            for (const double v : row) r.push_back(round_sig9(v));
            p.push_back(r);
        }
        doc["mean_effect"].push_back(p);
    }
    return doc.dump(1) + "\n";
}

EffectMatrix matrix_from_json(std::istream& json) {
    EffectMatrix m;
    try {
        const auto doc = nlohmann::json::parse(json);
        m.count = doc.at("count").get<std::size_t>();
        m.site = parse_hook_site(doc.at("site").get<std::string>());
        m.window_width = doc.at("window_width").get<std::size_t>();
        m.kl_order = parse_kl_order(doc.at("kl_order").get<std::string>());
        m.forward_passes = doc.value("forward_passes", std::uint64_t{0});
        if (doc.contains("config") && !doc["config"].empty()) m.config_echo = doc["config"].dump();
        m.placenames = doc.value("placenames", std::vector<std::string>{});
        for (const auto& d : doc.at("distances")) m.distances.push_back({d.at("text").get<std::string>(), d.at("miles").get<int>()});
        m.offsets = doc.at("offsets").get<std::vector<std::size_t>>();
        if (doc.contains("offset_tokens")) {
            for (const auto& row : doc["offset_tokens"]) {
                std::vector<OffsetTokens> r;
                for (const auto& t : row) r.push_back({t.at("clean").get<std::string>(), t.at("corrupted").get<std::string>()});
                m.offset_tokens.push_back(std::move(r));
            }
        }
        for (const auto& w : doc.at("windows")) m.windows.push_back({w.at("start").get<std::size_t>(), w.at("end").get<std::size_t>()});
        m.mean_effect = doc.at("mean_effect").get<std::vector<std::vector<std::vector<double>>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("results JSON: ") + e.what());
    }
    if (m.mean_effect.size() != m.distances.size()) throw Error(ErrorKind::InvalidShape, "results JSON: distance axis mismatch");
    for (const auto& plane : m.mean_effect) {
        if (plane.size() != m.offsets.size()) throw Error(ErrorKind::InvalidShape, "results JSON: offset axis mismatch");
        for (const auto& row : plane) {
            if (row.size() != m.windows.size()) throw Error(ErrorKind::InvalidShape, "results JSON: window axis mismatch");
        }
    }
    return m;
}

EffectMatrix read_matrix(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + json_path.string());
    return matrix_from_json(in);
}

void write_raw_csv(const EffectMatrix& m, std::ostream& out) {
    out << "placename,distance_text,miles,offset,window_start,kl_corrupted,kl_patched,effect\n";
    for (const auto& r : m.raw) {
        out << csv_field(r.placename) << ',' << csv_field(r.distance.text) << ',' << r.distance.miles << ',' << r.offset
            << ',' << r.window.start << ',' << format_sig9(r.kl_corrupted) << ',' << format_sig9(r.kl_patched) << ','
            << format_sig9(r.effect) << '\n';
    }
}

void write_matrix(const EffectMatrix& m, const std::filesystem::path& json_path, const std::filesystem::path& csv_path) {
    {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot open " + json_path.string() + " for writing");
        out << matrix_to_json(m);
        if (!out) throw Error(ErrorKind::Io, "failed writing " + json_path.string());
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot open " + csv_path.string() + " for writing");
        write_raw_csv(m, out);
        if (!out) throw Error(ErrorKind::Io, "failed writing " + csv_path.string());
    }
}

} // namespace geopatch
