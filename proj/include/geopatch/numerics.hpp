#pragma once

#include "geopatch/tensor.hpp"

#include <span>
#include <vector>

namespace geopatch {

// A next-token distribution. logp is kept alongside p whenever the
// distribution came out of softmax, so divergences can be taken in log space.
struct ProbDist {
    std::vector<float> p;
    std::vector<double> logp; // empty when only p is known

    ProbDist() = default;
    explicit ProbDist(std::vector<float> probs) : p(std::move(probs)) {}

    std::size_t size() const { return p.size(); }
    bool has_log() const { return logp.size() == p.size() && !p.empty(); }
    double log_at(std::size_t i) const;
};

ProbDist softmax(std::span<const float> logits);

// KL(p || q) in nats: sum_i p_i (ln p_i - ln q_i), with 0 ln(0/q) = 0.
// Tiny negative results from rounding (>= -1e-7) are clamped to 0. Returns
// +infinity when some p_i > 0 meets q_i = 0; see kl_divergence_checked.
double kl_divergence(const ProbDist& p, const ProbDist& q);

// The raw sum before the clamp, for auditing the rounding floor.
double kl_divergence_unclamped(const ProbDist& p, const ProbDist& q);

// As kl_divergence, but an infinite divergence throws DivergenceInfinite.
double kl_divergence_checked(const ProbDist& p, const ProbDist& q);

void layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias, float eps,
                std::span<float> out);
std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                              float eps);

enum class GeluForm { tanh_approx, exact_erf };

float gelu(float x, GeluForm form = GeluForm::tanh_approx);

Tensor2 matmul(const Tensor2& a, const Tensor2& b);

} // namespace geopatch
