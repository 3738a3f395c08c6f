#include "geopatch/model.hpp"

#include "geopatch/error.hpp"
#include "geopatch/kernels.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <istream>

namespace geopatch {
namespace {

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::string layer_name(std::size_t layer, std::string_view suffix) {
    return "layer." + std::to_string(layer) + "." + std::string(suffix);
}

} // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "model config: " + what); };
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 || d_mlp < 1 || vocab_size < 1 || max_seq < 1) {
        fail("all counts must be >= 1");
    }
    if (n_heads * d_head != d_model) {
        fail("n_heads * d_head = " + std::to_string(n_heads * d_head) + " but d_model = " + std::to_string(d_model));
    }
    if (!(norm_eps > 0.0f) || !std::isfinite(norm_eps)) fail("norm_eps must be positive");
}

ModelConfig parse_model_config(std::istream& json) {
    ModelConfig c;
    try {
        const auto doc = nlohmann::json::parse(json);
        static const char* const kFields[] = {"n_layers", "d_model",   "n_heads",  "d_head",     "d_mlp",
                                              "vocab_size", "max_seq", "norm_eps", "activation", "tie_embeddings"};
        for (const auto& [key, value] : doc.items()) {
            if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
                throw Error(ErrorKind::InvalidConfig, "model config: unknown field '" + key + "'");
            }
        }
        c.n_layers = doc.at("n_layers").get<std::size_t>();
        c.d_model = doc.at("d_model").get<std::size_t>();
        c.n_heads = doc.at("n_heads").get<std::size_t>();
        c.d_head = doc.at("d_head").get<std::size_t>();
        c.d_mlp = doc.at("d_mlp").get<std::size_t>();
        c.vocab_size = doc.at("vocab_size").get<std::size_t>();
        c.max_seq = doc.at("max_seq").get<std::size_t>();
        c.norm_eps = doc.at("norm_eps").get<float>();
        const auto act = doc.at("activation").get<std::string>();
        if (act == "gelu_tanh") {
            c.activation = GeluForm::tanh_approx;
        } else if (act == "gelu_exact") {
            c.activation = GeluForm::exact_erf;
        } else {
            throw Error(ErrorKind::InvalidConfig, "model config: unknown activation '" + act + "'");
        }
        c.tie_embeddings = doc.at("tie_embeddings").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return parse_model_config(in);
}

namespace {

// Shortest decimal that reads back as the same float, so 1e-5f prints as 1e-05.
double shortest_decimal(float v) {
    char buf[32];
    for (int digits = 1; digits < 9; ++digits) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
        const double d = std::strtod(buf, nullptr);
        if (static_cast<float>(d) == v) return d;
    }
    return v;
}

} // namespace

std::string to_json(const ModelConfig& c) {
    nlohmann::ordered_json doc;
    doc["n_layers"] = c.n_layers;
    doc["d_model"] = c.d_model;
    doc["n_heads"] = c.n_heads;
    doc["d_head"] = c.d_head;
    doc["d_mlp"] = c.d_mlp;
    doc["vocab_size"] = c.vocab_size;
    doc["max_seq"] = c.max_seq;
    doc["norm_eps"] = shortest_decimal(c.norm_eps);
    doc["activation"] = c.activation == GeluForm::tanh_approx ? "gelu_tanh" : "gelu_exact";
    doc["tie_embeddings"] = c.tie_embeddings;
    return doc.dump(2);
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const ModelConfig& c) {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    const std::size_t d = c.d_model;
    out.push_back({"embed.W", {c.vocab_size, d}});
    out.push_back({"pos.W", {c.max_seq, d}});
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        out.push_back({layer_name(l, "ln1.g"), {d}});
        out.push_back({layer_name(l, "ln1.b"), {d}});
        for (const char* w : {"Wq", "Wk", "Wv", "Wo"}) out.push_back({layer_name(l, std::string("attn.") + w), {d, d}});
        for (const char* b : {"bq", "bk", "bv", "bo"}) out.push_back({layer_name(l, std::string("attn.") + b), {d}});
        out.push_back({layer_name(l, "ln2.g"), {d}});
        out.push_back({layer_name(l, "ln2.b"), {d}});
        out.push_back({layer_name(l, "mlp.Win"), {d, c.d_mlp}});
        out.push_back({layer_name(l, "mlp.bin"), {c.d_mlp}});
        out.push_back({layer_name(l, "mlp.Wout"), {c.d_mlp, d}});
        out.push_back({layer_name(l, "mlp.bout"), {d}});
    }
    out.push_back({"final_ln.g", {d}});
    out.push_back({"final_ln.b", {d}});
    if (!c.tie_embeddings) out.push_back({"unembed.W", {d, c.vocab_size}});
    return out;
}

NameMap parse_name_map(std::istream& json) {
    try {
        const auto doc = nlohmann::json::parse(json);
        return doc.get<NameMap>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("name map: ") + e.what());
    }
}

NameMap load_name_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return parse_name_map(in);
}

ParameterStore load_weights(std::istream& in, const ModelConfig& config, const NameMap& names) {
    config.validate();
    auto entries = archive::read(in);

    std::map<std::string, archive::Entry> canonical;
    for (auto& [name, entry] : entries) {
        const auto it = names.find(name);
        canonical[it == names.end() ? name : it->second] = std::move(entry);
    }

    ParameterStore store;
    for (const auto& [name, shape] : expected_tensors(config)) {
        const auto it = canonical.find(name);
        if (it == canonical.end()) throw Error(ErrorKind::MissingTensor, "missing tensor " + name);
        if (it->second.shape != shape) {
            throw Error(ErrorKind::ShapeMismatch, "tensor " + name + ": expected " + shape_string(shape) + ", found " +
                                                      shape_string(it->second.shape));
        }
        const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
        const std::size_t cols = shape.back();
        store.emplace(name, Tensor2(rows, cols, std::move(it->second.values)));
    }
    return store;
}

ParameterStore load_weights(const std::filesystem::path& path, const ModelConfig& config, const NameMap& names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return load_weights(in, config, names);
}

archive::Entries to_archive_entries(const ParameterStore& params) {
    archive::Entries out;
    for (const auto& [name, t] : params) {
        const bool vector = t.rows == 1 && name.find(".W") == std::string::npos;
        out[name] = {vector ? std::vector<std::size_t>{t.cols} : std::vector<std::size_t>{t.rows, t.cols}, t.data};
    }
    return out;
}

std::string_view to_string(HookSite site) {
    switch (site) {
        case HookSite::resid_pre: return "resid_pre";
        case HookSite::attn_out: return "attn_out";
        case HookSite::mlp_out: return "mlp_out";
        case HookSite::resid_post: return "resid_post";
    }
    return "unknown";
}

HookSite parse_hook_site(std::string_view name) {
    for (const auto s : {HookSite::resid_pre, HookSite::attn_out, HookSite::mlp_out, HookSite::resid_post}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown hook site '" + std::string(name) + "'");
}

std::string to_string(const HookId& hook) {
    if (hook.layer == HookId::kEmbedLayer) return "embed";
    if (hook.layer == HookId::kFinalLayer) return "final";
    return "layer." + std::to_string(hook.layer) + "." + std::string(to_string(hook.site));
}

Model::Model(ModelConfig config, ParameterStore params) : config_(config), params_(std::move(params)) {
    config_.validate();
    for (const auto& [name, shape] : expected_tensors(config_)) {
        const auto it = params_.find(name);
        if (it == params_.end()) throw Error(ErrorKind::MissingTensor, "missing tensor " + name);
        const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
        if (it->second.rows != rows || it->second.cols != shape.back()) {
            throw Error(ErrorKind::ShapeMismatch, "tensor " + name + ": expected " + shape_string(shape));
        }
    }
    embed_ = &param("embed.W");
    pos_ = &param("pos.W");
    final_g_ = &param("final_ln.g");
    final_b_ = &param("final_ln.b");
    unembed_ = config_.tie_embeddings ? nullptr : &param("unembed.W");
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        auto p = [&](std::string_view s) { return &param(layer_name(l, s)); };
        layers_.push_back({p("ln1.g"), p("ln1.b"), p("attn.Wq"), p("attn.bq"), p("attn.Wk"), p("attn.bk"),
                           p("attn.Wv"), p("attn.bv"), p("attn.Wo"), p("attn.bo"), p("ln2.g"), p("ln2.b"),
                           p("mlp.Win"), p("mlp.bin"), p("mlp.Wout"), p("mlp.bout")});
    }
}

const Tensor2& Model::param(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::MissingTensor, "missing tensor " + name);
    return it->second;
}

ForwardResult Model::forward(std::span<const TokenId> tokens, const CaptureSet& capture, const PatchSpec& patch,
                             const ForwardOptions& options) const {
    forward_count_.fetch_add(1, std::memory_order_relaxed);

    const std::size_t seq = tokens.size();
    const std::size_t d = config_.d_model;
    const std::size_t n_layers = config_.n_layers;
    if (seq == 0) throw Error(ErrorKind::InvalidShape, "forward: empty token sequence");
    if (seq > config_.max_seq) {
        throw Error(ErrorKind::InvalidShape, "forward: " + std::to_string(seq) + " tokens exceed max_seq " +
                                                 std::to_string(config_.max_seq));
    }
    for (const TokenId t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
            throw Error(ErrorKind::UnknownToken, "forward: token id " + std::to_string(t) + " outside vocab");
        }
    }

    auto valid_hook = [&](const HookId& h) {
        if (h.layer == HookId::kEmbedLayer || h.layer == HookId::kFinalLayer) return h.site == HookSite::resid_post;
        return h.layer >= 0 && static_cast<std::size_t>(h.layer) < n_layers;
    };

    const std::size_t start = options.start_layer;
    const bool resumed = start > 0 || options.start_residual != nullptr;
    if (resumed) {
        if (!options.start_residual || start >= n_layers || options.start_residual->rows != seq ||
            options.start_residual->cols != d) {
            throw Error(ErrorKind::InvalidConfig, "forward: resume needs a [seq, d_model] residual and a valid layer");
        }
    }
    auto skipped = [&](const HookId& h) {
        return resumed && (h.layer == HookId::kEmbedLayer || (h.layer >= 0 && static_cast<std::size_t>(h.layer) < start));
    };

    std::map<HookId, std::vector<const PatchEntry*>> patches;
    for (const auto& e : patch.entries) {
        if (!valid_hook(e.hook)) throw Error(ErrorKind::InvalidPatch, "patch targets invalid hook " + to_string(e.hook));
        if (skipped(e.hook)) throw Error(ErrorKind::InvalidPatch, "patch targets " + to_string(e.hook) + " before resume layer");
        if (e.position >= seq) {
            throw Error(ErrorKind::InvalidPatch, "patch position " + std::to_string(e.position) + " out of range for " +
                                                     std::to_string(seq) + " tokens");
        }
        if (e.vector.size() != d) throw Error(ErrorKind::InvalidPatch, "patch vector width differs from d_model");
        for (const float v : e.vector) {
            if (!std::isfinite(v)) throw Error(ErrorKind::InvalidPatch, "patch vector has non-finite values");
        }
        auto& slot = patches[e.hook];
        for (const auto* other : slot) {
            if (other->position == e.position) {
                throw Error(ErrorKind::InvalidPatch, "duplicate patch for " + to_string(e.hook) + " at position " +
                                                         std::to_string(e.position));
            }
        }
        slot.push_back(&e);
    }
    for (const auto& h : capture) {
        if (!valid_hook(h) || skipped(h)) throw Error(ErrorKind::InvalidConfig, "cannot capture " + to_string(h));
    }

    ForwardResult result;
    // Replace, check, then record: downstream always sees the post-patch value.
    auto hook = [&](HookId id, Tensor2& act) {
        if (const auto it = patches.find(id); it != patches.end()) {
            for (const auto* e : it->second) std::copy(e->vector.begin(), e->vector.end(), act.row(e->position).begin());
        }
        for (const float v : act.data) {
            if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteActivation, "non-finite activation at " + to_string(id));
        }
        if (capture.contains(id)) result.cache[id] = act;
    };

    const auto& k = kernels::active();
    Tensor2 resid(seq, d);
    if (resumed) {
        resid = *options.start_residual;
    } else {
        for (std::size_t p = 0; p < seq; ++p) {
            const auto e = embed_->row(static_cast<std::size_t>(tokens[p]));
            const auto q = pos_->row(p);
            auto r = resid.row(p);
            for (std::size_t i = 0; i < d; ++i) r[i] = e[i] + q[i];
        }
        hook(HookId::embed(), resid);
    }

    const std::size_t heads = config_.n_heads;
    const std::size_t dh = config_.d_head;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor2 normed(seq, d), q(seq, d), kk(seq, d), v(seq, d), z(seq, d), attn(seq, d), mlp(seq, d);
    Tensor2 hidden(seq, config_.d_mlp);
    std::vector<double> acc(std::max({d, config_.d_mlp, config_.vocab_size}));
    std::vector<double> weights(seq);

    for (std::size_t l = start; l < n_layers; ++l) {
        const Layer& L = layers_[l];
        const int li = static_cast<int>(l);
        hook({li, HookSite::resid_pre}, resid);

        for (std::size_t p = 0; p < seq; ++p) {
            layer_norm(resid.row(p), L.ln1_g->data, L.ln1_b->data, config_.norm_eps, normed.row(p));
            k.affine_row(normed.row(p), L.wq->data, L.bq->data, q.row(p), acc);
            k.affine_row(normed.row(p), L.wk->data, L.bk->data, kk.row(p), acc);
            k.affine_row(normed.row(p), L.wv->data, L.bv->data, v.row(p), acc);
        }
        for (std::size_t p = 0; p < seq; ++p) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * dh;
                const auto qh = q.row(p).subspan(off, dh);
                double peak = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j <= p; ++j) {
                    weights[j] = k.dot(qh, kk.row(j).subspan(off, dh)) * scale;
                    peak = std::max(peak, weights[j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j <= p; ++j) {
                    weights[j] = std::exp(weights[j] - peak);
                    total += weights[j];
                }
                std::span<double> zacc(acc.data(), dh);
                std::fill(zacc.begin(), zacc.end(), 0.0);
                for (std::size_t j = 0; j <= p; ++j) k.axpy(weights[j] / total, v.row(j).subspan(off, dh), zacc);
                auto zrow = z.row(p).subspan(off, dh);
                for (std::size_t i = 0; i < dh; ++i) zrow[i] = static_cast<float>(zacc[i]);
            }
            k.affine_row(z.row(p), L.wo->data, L.bo->data, attn.row(p), acc);
        }
        hook({li, HookSite::attn_out}, attn);
        for (std::size_t i = 0; i < resid.size(); ++i) resid.data[i] += attn.data[i];

        for (std::size_t p = 0; p < seq; ++p) {
            layer_norm(resid.row(p), L.ln2_g->data, L.ln2_b->data, config_.norm_eps, normed.row(p));
            auto hrow = hidden.row(p);
            k.affine_row(normed.row(p), L.w_in->data, L.b_in->data, hrow, acc);
            for (float& x : hrow) x = gelu(x, config_.activation);
            k.affine_row(hrow, L.w_out->data, L.b_out->data, mlp.row(p), acc);
        }
        hook({li, HookSite::mlp_out}, mlp);
        for (std::size_t i = 0; i < resid.size(); ++i) resid.data[i] += mlp.data[i];

        hook({li, HookSite::resid_post}, resid);
    }

    for (std::size_t p = 0; p < seq; ++p) {
        layer_norm(resid.row(p), final_g_->data, final_b_->data, config_.norm_eps, normed.row(p));
    }
    hook(HookId::final_norm(), normed);

    const std::size_t first = options.logit_rows == LogitRows::last ? seq - 1 : 0;
    const std::size_t vocab = config_.vocab_size;
    result.logits = Tensor2(seq - first, vocab);
    for (std::size_t p = first; p < seq; ++p) {
        auto out = result.logits.row(p - first);
        if (unembed_) {
            k.affine_row(normed.row(p), unembed_->data, {}, out, acc);
        } else {
            for (std::size_t t = 0; t < vocab; ++t) out[t] = static_cast<float>(k.dot(normed.row(p), embed_->row(t)));
        }
        for (const float x : out) {
            if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteActivation, "non-finite logit");
        }
    }
    return result;
}

ProbDist next_token_distribution(const Tensor2& logits) {
    if (logits.rows == 0 || logits.cols == 0) throw Error(ErrorKind::InvalidShape, "next_token_distribution: empty logits");
    return softmax(logits.row(logits.rows - 1));
}

} // namespace geopatch
