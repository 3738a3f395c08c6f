#include "oracle.hpp"

#include <cmath>
#include <random>
#include <string>

namespace oracle {
namespace {

using Row = std::vector<float>;
using Rows = std::vector<Row>;

const Tensor2& get(const ParameterStore& p, const std::string& name) { return p.at(name); }

Row linear(const Row& x, const Tensor2& w, const Tensor2& b) {
    Row out(w.cols);
    for (std::size_t j = 0; j < w.cols; ++j) {
        double s = b.data[j];
        for (std::size_t i = 0; i < w.rows; ++i) s += static_cast<double>(x[i]) * w.data[i * w.cols + j];
        out[j] = static_cast<float>(s);
    }
    return out;
}

Row norm(const Row& x, const Tensor2& g, const Tensor2& b, double eps) {
    double mean = 0;
    for (float v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    Row out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>((x[i] - mean) / std::sqrt(var + eps) * g.data[i] + b.data[i]);
    return out;
}

float act(float x, geopatch::GeluForm form) {
    const double v = x;
    if (form == geopatch::GeluForm::exact_erf) return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
    const double k = std::sqrt(2.0 / 3.141592653589793);
    return static_cast<float>(0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))));
}

Tensor2 to_tensor(const Rows& rows) {
    Tensor2 t(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
    return t;
}

} // namespace

Trace run(const ModelConfig& cfg, const ParameterStore& P, std::span<const TokenId> tokens,
          std::span<const Substitution> subs) {
    const std::size_t n = tokens.size();
    const std::size_t d = cfg.d_model;
    Trace trace;
    auto hook = [&](int layer, HookSite site, Rows& rows) {
        for (const auto& s : subs)
            if (s.layer == layer && s.site == site) rows[s.position] = s.values;
        trace.acts[{layer, site}] = to_tensor(rows);
    };

    Rows x(n, Row(d));
    const Tensor2& E = get(P, "embed.W");
    const Tensor2& pos = get(P, "pos.W");
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < d; ++i)
            x[t][i] = E.at(static_cast<std::size_t>(tokens[t]), i) + pos.at(t, i);
    hook(-1, HookSite::resid_post, x);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer." + std::to_string(l) + ".";
        hook(static_cast<int>(l), HookSite::resid_pre, x);

        Rows q(n), k(n), v(n);
        for (std::size_t t = 0; t < n; ++t) {
            const Row h = norm(x[t], get(P, pre + "ln1.g"), get(P, pre + "ln1.b"), cfg.norm_eps);
            q[t] = linear(h, get(P, pre + "attn.Wq"), get(P, pre + "attn.bq"));
            k[t] = linear(h, get(P, pre + "attn.Wk"), get(P, pre + "attn.bk"));
            v[t] = linear(h, get(P, pre + "attn.Wv"), get(P, pre + "attn.bv"));
        }
        Rows z(n, Row(cfg.n_heads * cfg.d_head));
        const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * cfg.d_head;
            for (std::size_t t = 0; t < n; ++t) {
                std::vector<double> w(t + 1);
                double top = -1e300;
                for (std::size_t s = 0; s <= t; ++s) {
                    double dot = 0;
                    for (std::size_t e = 0; e < cfg.d_head; ++e)
                        dot += static_cast<double>(q[t][off + e]) * k[s][off + e];
                    w[s] = dot * scale;
                    top = std::max(top, w[s]);
                }
                double sum = 0;
                for (auto& a : w) sum += (a = std::exp(a - top));
                for (std::size_t e = 0; e < cfg.d_head; ++e) {
                    double acc = 0;
                    for (std::size_t s = 0; s <= t; ++s) acc += w[s] / sum * v[s][off + e];
                    z[t][off + e] = static_cast<float>(acc);
                }
            }
        }
        Rows attn(n);
        for (std::size_t t = 0; t < n; ++t) attn[t] = linear(z[t], get(P, pre + "attn.Wo"), get(P, pre + "attn.bo"));
        hook(static_cast<int>(l), HookSite::attn_out, attn);
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t i = 0; i < d; ++i) x[t][i] += attn[t][i];

        Rows mlp(n);
        for (std::size_t t = 0; t < n; ++t) {
            const Row h = norm(x[t], get(P, pre + "ln2.g"), get(P, pre + "ln2.b"), cfg.norm_eps);
            Row mid = linear(h, get(P, pre + "mlp.Win"), get(P, pre + "mlp.bin"));
            for (auto& m : mid) m = act(m, cfg.activation);
            mlp[t] = linear(mid, get(P, pre + "mlp.Wout"), get(P, pre + "mlp.bout"));
        }
        hook(static_cast<int>(l), HookSite::mlp_out, mlp);
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t i = 0; i < d; ++i) x[t][i] += mlp[t][i];
        hook(static_cast<int>(l), HookSite::resid_post, x);
    }

    Rows fin(n);
    for (std::size_t t = 0; t < n; ++t) fin[t] = norm(x[t], get(P, "final_ln.g"), get(P, "final_ln.b"), cfg.norm_eps);
    hook(-2, HookSite::resid_post, fin);

    const std::size_t V = cfg.vocab_size;
    trace.logits = Tensor2(n, V);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < V; ++j) {
            double s = 0;
            if (cfg.tie_embeddings) {
                for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(fin[t][i]) * E.at(j, i);
            } else {
                const Tensor2& U = get(P, "unembed.W");
                for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(fin[t][i]) * U.at(i, j);
            }
            trace.logits.at(t, j) = static_cast<float>(s);
        }
    }
    return trace;
}

std::vector<double> last_row_probs(const Tensor2& logits) {
    const auto row = logits.row(logits.rows - 1);
    double top = -1e300;
    for (float v : row) top = std::max(top, static_cast<double>(v));
    std::vector<double> p(row.size());
    double sum = 0;
    for (std::size_t i = 0; i < row.size(); ++i) sum += (p[i] = std::exp(row[i] - top));
    for (auto& v : p) v /= sum;
    return p;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

ParameterStore random_params(const ModelConfig& cfg, unsigned seed) {
    std::mt19937 rng(seed);
    ParameterStore P;
    auto fill = [&](const std::string& name, std::size_t r, std::size_t c, double mean, double sd) {
        std::normal_distribution<double> dist(mean, sd);
        Tensor2 t(r, c);
        for (auto& v : t.data) v = static_cast<float>(dist(rng));
        P[name] = std::move(t);
    };
    const std::size_t d = cfg.d_model, hd = cfg.n_heads * cfg.d_head;
    fill("embed.W", cfg.vocab_size, d, 0, 1);
    fill("pos.W", cfg.max_seq, d, 0, 0.5);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer." + std::to_string(l) + ".";
        fill(pre + "ln1.g", 1, d, 1, 0.1);
        fill(pre + "ln1.b", 1, d, 0, 0.1);
        for (const char* m : {"attn.Wq", "attn.Wk", "attn.Wv"}) fill(pre + m, d, hd, 0, 1 / std::sqrt(double(d)));
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv"}) fill(pre + b, 1, hd, 0, 0.1);
        fill(pre + "attn.Wo", hd, d, 0, 1 / std::sqrt(double(hd)));
        fill(pre + "attn.bo", 1, d, 0, 0.1);
        fill(pre + "ln2.g", 1, d, 1, 0.1);
        fill(pre + "ln2.b", 1, d, 0, 0.1);
        fill(pre + "mlp.Win", d, cfg.d_mlp, 0, 1 / std::sqrt(double(d)));
        fill(pre + "mlp.bin", 1, cfg.d_mlp, 0, 0.1);
        fill(pre + "mlp.Wout", cfg.d_mlp, d, 0, 1 / std::sqrt(double(cfg.d_mlp)));
        fill(pre + "mlp.bout", 1, d, 0, 0.1);
    }
    fill("final_ln.g", 1, d, 1, 0.1);
    fill("final_ln.b", 1, d, 0, 0.1);
    if (!cfg.tie_embeddings) fill("unembed.W", d, cfg.vocab_size, 0, 1 / std::sqrt(double(d)));
    return P;
}

ModelConfig small_config(std::size_t layers, std::size_t d_model, std::size_t heads, std::size_t vocab,
                         std::size_t max_seq) {
    ModelConfig c;
    c.n_layers = layers;
    c.d_model = d_model;
    c.n_heads = heads;
    c.d_head = d_model / heads;
    c.d_mlp = 4 * d_model;
    c.vocab_size = vocab;
    c.max_seq = max_seq;
    c.norm_eps = 1e-5f;
    return c;
}

} // namespace oracle
