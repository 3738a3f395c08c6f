// geopatch: corpus building, patching runs, and heatmap rendering.

#include "geopatch/corpus.hpp"
#include "geopatch/error.hpp"
#include "geopatch/heatmap.hpp"
#include "geopatch/kernels.hpp"
#include "geopatch/model.hpp"
#include "geopatch/runner.hpp"
#include "geopatch/toy.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace geopatch;

struct CorpusArgs {
    std::string geonames;
    std::string country = "GB";
    std::int64_t min_pop = 50000;
    char feature_class = 'P';
    std::string out = "corpus.json";
    bool control = false;
};

struct RunArgs {
    std::string config;
    ExperimentConfig exp;
    std::string weights, model_config, name_map, vocab, merges, corpus, out, raw;
    std::string site;
    std::size_t window = 0;
    std::string kl_order;
    std::size_t workers = 0;
    std::size_t limit = 0;
};

struct RenderArgs {
    std::string in;
    std::string out = "heatmap.svg";
    double clip_percentile = 99.0;
};

struct ModelArgs {
    std::string weights, model_config, name_map;
    std::string tokens;
    std::string out_dir;
    std::string geonames;
    std::size_t placenames = 3;
    std::uint64_t seed = 20260603;
};

std::size_t default_workers() {
    if (const char* env = std::getenv("GEOPATCH_WORKERS")) {
        try {
            const long n = std::stol(env);
            if (n >= 1) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
        throw Error(ErrorKind::InvalidConfig, std::string("GEOPATCH_WORKERS='") + env + "' is not a positive integer");
    }
    return 1;
}

std::vector<std::string> geonames_placenames(const CorpusArgs& a, std::ostream& log) {
    std::ifstream in(a.geonames);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + a.geonames);
    const auto parsed = parse_geonames(in);
    for (const auto& r : parsed.rejects) log << "geonames: line " << r.line_number << " rejected: " << r.reason << '\n';
    return filter_places(parsed.records, a.country, a.min_pop, a.feature_class);
}

int cmd_corpus_build(const CorpusArgs& a) {
    const auto names = geonames_placenames(a, std::cerr);
    const auto corpus = make_corpus(names, distance_phrases(), a.control);
    std::ofstream out(a.out);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + a.out + " for writing");
    out << to_json(corpus);
    std::cout << "wrote " << a.out << ": " << corpus.placenames.size() << " placenames, " << corpus.pairs.size()
              << " pairs\n";
    return 0;
}

int cmd_run(RunArgs a) {
    ExperimentConfig c;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw Error(ErrorKind::Io, "cannot open " + a.config);
        c = parse_experiment_config(in, std::filesystem::path(a.config).parent_path());
    } else {
        c.workers = default_workers();
    }
    if (!a.weights.empty()) c.weights = a.weights;
    if (!a.model_config.empty()) c.model_config = a.model_config;
    if (!a.name_map.empty()) c.name_map = a.name_map;
    if (!a.vocab.empty()) c.vocab = a.vocab;
    if (!a.merges.empty()) c.merges = a.merges;
    if (!a.corpus.empty()) c.corpus = a.corpus;
    if (!a.out.empty()) c.out_json = a.out;
    if (!a.raw.empty()) c.out_csv = a.raw;
    if (!a.site.empty()) c.site = parse_hook_site(a.site);
    if (a.window > 0) c.window_width = a.window;
    if (!a.kl_order.empty()) c.kl_order = parse_kl_order(a.kl_order);
    if (a.workers > 0) c.workers = a.workers;
    if (a.limit > 0) c.limit_placenames = a.limit;
    if (c.out_json.empty()) c.out_json = "results.json";

    const auto m = run_experiment(c);
    std::cout << "wrote " << c.out_json.string() << ": " << m.distances.size() << " distances x " << m.offsets.size()
              << " offsets x " << m.windows.size() << " windows over " << m.count << " placenames ("
              << m.forward_passes << " forward passes)\n";
    return 0;
}

int cmd_render(const RenderArgs& a) {
    const auto m = read_matrix(a.in);
    HeatmapOptions opt;
    opt.clip_percentile = a.clip_percentile;
    render_heatmap(m, a.out, opt);
    std::cout << "wrote " << a.out << '\n';
    return 0;
}

Model load_model(const ModelArgs& a) {
    const auto config = load_model_config(a.model_config);
    const NameMap names = a.name_map.empty() ? NameMap{} : load_name_map(a.name_map);
    return Model(config, load_weights(a.weights, config, names));
}

int cmd_model_info(const ModelArgs& a) {
    const Model model = load_model(a);
    std::size_t n_params = 0;
    for (const auto& [name, t] : model.params()) n_params += t.size();
    nlohmann::ordered_json doc;
    doc["config"] = nlohmann::ordered_json::parse(to_json(model.config()));
    doc["parameters"] = n_params;
    doc["tensors"] = model.params().size();
    doc["kernels"] = std::string(kernels::to_string(kernels::active().isa));
    std::cout << doc.dump(2) << '\n';
    return 0;
}

int cmd_model_logits(const ModelArgs& a) {
    const Model model = load_model(a);
    std::vector<TokenId> ids;
    std::stringstream ss(a.tokens);
    for (std::string item; std::getline(ss, item, ',');) ids.push_back(static_cast<TokenId>(std::stol(item)));
    const auto result = model.forward(ids);
    nlohmann::json doc;
    doc["logits"] = nlohmann::json::array();
    for (std::size_t r = 0; r < result.logits.rows; ++r) {
        const auto row = result.logits.row(r);
        doc["logits"].push_back(std::vector<float>(row.begin(), row.end()));
    }
    std::cout << doc.dump() << '\n';
    return 0;
}

int cmd_model_init_toy(const ModelArgs& a) {
    CorpusArgs ca;
    ca.geonames = a.geonames;
    auto names = geonames_placenames(ca, std::cerr);
    if (a.placenames > 0 && names.size() > a.placenames) names.resize(a.placenames);
    const auto assets = toy::make_assets(names, a.seed);
    toy::write_assets(assets, a.out_dir);
    std::cout << "wrote toy model to " << a.out_dir << ": vocab " << assets.vocab.size() << ", "
              << assets.config.n_layers << " layers, trained on " << names.size() << " placenames\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Activation patching of geographic relative-space prompts"};
    app.require_subcommand(1);

    CorpusArgs corpus_args;
    auto* corpus = app.add_subcommand("corpus", "Prompt corpus tools");
    corpus->require_subcommand(1);
    auto* build = corpus->add_subcommand("build", "Build clean/corrupted prompt pairs from a GeoNames dump");
    build->add_option("--geonames", corpus_args.geonames, "GeoNames cities dump (TSV)")->required();
    build->add_option("--country", corpus_args.country, "Country code")->capture_default_str();
    build->add_option("--min-pop", corpus_args.min_pop, "Keep places with population strictly above this")->capture_default_str();
    build->add_option("--feature-class", corpus_args.feature_class, "GeoNames feature class")->capture_default_str();
    build->add_option("--out", corpus_args.out, "Output corpus JSON")->capture_default_str();
    build->add_flag("--control", corpus_args.control, "Write the clean prompt as the corrupted prompt too");

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run the patching experiment");
    run->add_option("--config", run_args.config, "Experiment config JSON");
    run->add_option("--weights", run_args.weights, "Tensor archive (safetensors)");
    run->add_option("--model-config", run_args.model_config, "Model config JSON");
    run->add_option("--name-map", run_args.name_map, "Checkpoint-to-canonical tensor name map JSON");
    run->add_option("--vocab", run_args.vocab, "vocab.json");
    run->add_option("--merges", run_args.merges, "merges.txt");
    run->add_option("--corpus", run_args.corpus, "Corpus JSON");
    run->add_option("--site", run_args.site, "Hook site")
        ->check(CLI::IsMember({"resid_pre", "attn_out", "mlp_out", "resid_post"}));
    run->add_option("--window", run_args.window, "Layer window width (default 5)");
    run->add_option("--kl-order", run_args.kl_order, "KL argument order")
        ->check(CLI::IsMember({"target_from_clean", "clean_from_target"}));
    run->add_option("--workers", run_args.workers, "Worker threads (default $GEOPATCH_WORKERS or 1)");
    run->add_option("--limit-placenames", run_args.limit, "Use only the first N placenames");
    run->add_option("--out", run_args.out, "Results JSON (default results.json)");
    run->add_option("--raw", run_args.raw, "Per-record CSV");

    RenderArgs render_args;
    auto* render = app.add_subcommand("render", "Render a results JSON as an SVG heatmap");
    render->add_option("--in", render_args.in, "Results JSON")->required();
    render->add_option("--out", render_args.out, "Output SVG")->capture_default_str();
    render->add_option("--clip-percentile", render_args.clip_percentile, "Colour clip percentile of |effect|")
        ->capture_default_str();

    ModelArgs model_args;
    auto* model = app.add_subcommand("model", "Model tools");
    model->require_subcommand(1);
    auto add_model_inputs = [&](CLI::App* sub) {
        sub->add_option("--weights", model_args.weights, "Tensor archive (safetensors)")->required();
        sub->add_option("--model-config", model_args.model_config, "Model config JSON")->required();
        sub->add_option("--name-map", model_args.name_map, "Tensor name map JSON");
    };
    auto* info = model->add_subcommand("info", "Load a model and print its configuration");
    add_model_inputs(info);
    auto* logits = model->add_subcommand("logits", "Print logits for a token id sequence as JSON");
    add_model_inputs(logits);
    logits->add_option("--tokens", model_args.tokens, "Comma-separated token ids")->required();
    auto* init_toy = model->add_subcommand("init-toy", "Write a small random model and a BPE vocab trained on prompts");
    init_toy->add_option("--geonames", model_args.geonames, "GeoNames dump supplying placenames")->required();
    init_toy->add_option("--placenames", model_args.placenames, "Placenames to train the vocab on (0 = all)")
        ->capture_default_str();
    init_toy->add_option("--seed", model_args.seed, "Weight RNG seed")->capture_default_str();
    init_toy->add_option("--out", model_args.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: Usage: " << e.what() << '\n' << app.help();
        return 2;
    }

    try {
        if (build->parsed()) return cmd_corpus_build(corpus_args);
        if (run->parsed()) return cmd_run(run_args);
        if (render->parsed()) return cmd_render(render_args);
        if (info->parsed()) return cmd_model_info(model_args);
        if (logits->parsed()) return cmd_model_logits(model_args);
        if (init_toy->parsed()) return cmd_model_init_toy(model_args);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
