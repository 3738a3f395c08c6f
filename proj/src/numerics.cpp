#include "geopatch/numerics.hpp"

#include "geopatch/error.hpp"
#include "geopatch/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geopatch {

double ProbDist::log_at(std::size_t i) const {
    if (has_log()) return logp[i];
    return p[i] > 0.0f ? std::log(static_cast<double>(p[i])) : -std::numeric_limits<double>::infinity();
}

ProbDist softmax(std::span<const float> logits) {
    if (logits.empty()) throw Error(ErrorKind::InvalidShape, "softmax: empty input");
    float peak = logits[0];
    for (const float v : logits) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "softmax: non-finite logit");
        peak = std::max(peak, v);
    }
    double total = 0.0;
    for (const float v : logits) total += std::exp(static_cast<double>(v) - peak);
    const double log_z = static_cast<double>(peak) + std::log(total);

    ProbDist out;
    out.p.resize(logits.size());
    out.logp.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.logp[i] = static_cast<double>(logits[i]) - log_z;
        out.p[i] = static_cast<float>(std::exp(out.logp[i]));
    }
    return out;
}

double kl_divergence_unclamped(const ProbDist& p, const ProbDist& q) {
    if (p.size() != q.size()) {
        throw Error(ErrorKind::InvalidShape, "kl_divergence: lengths " + std::to_string(p.size()) + " and " +
                                                 std::to_string(q.size()) + " differ");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.p[i] <= 0.0f) continue;
        const double lp = p.log_at(i);
        const double lq = q.log_at(i);
        if (std::isinf(lq)) return std::numeric_limits<double>::infinity();
        const double pi = p.has_log() ? std::exp(lp) : static_cast<double>(p.p[i]);
        sum += pi * (lp - lq);
    }
    return sum;
}

double kl_divergence(const ProbDist& p, const ProbDist& q) {
    const double raw = kl_divergence_unclamped(p, q);
    if (std::isnan(raw)) throw Error(ErrorKind::NonFiniteInput, "kl_divergence: NaN input");
    if (raw < 0.0) {
        if (raw >= -1e-7) return 0.0;
        throw Error(ErrorKind::InvalidShape, "kl_divergence: inputs are not probability distributions");
    }
    return raw;
}

double kl_divergence_checked(const ProbDist& p, const ProbDist& q) {
    const double d = kl_divergence(p, q);
    if (std::isinf(d)) throw Error(ErrorKind::DivergenceInfinite, "kl_divergence: p has mass where q has none");
    return d;
}

void layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias, float eps,
                std::span<float> out) {
    if (gain.size() != x.size() || bias.size() != x.size() || out.size() != x.size()) {
        throw Error(ErrorKind::InvalidShape, "layer_norm: gain/bias/out width does not match input");
    }
    if (x.empty()) return;
    double mean = 0.0;
    for (const float v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (const float v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>((x[i] - mean) * inv * gain[i] + bias[i]);
    }
}

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                              float eps) {
    std::vector<float> out(x.size());
    layer_norm(x, gain, bias, eps, out);
    return out;
}

float gelu(float x, GeluForm form) {
    const double v = x;
    if (form == GeluForm::exact_erf) return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    return static_cast<float>(0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))));
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows) {
        throw Error(ErrorKind::InvalidShape, "matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                                 " times " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    const auto& k = kernels::active();
    Tensor2 out(a.rows, b.cols);
    std::vector<double> acc(b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) k.affine_row(a.row(r), b.data, {}, out.row(r), acc);
    return out;
}

} // namespace geopatch
