#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xlner/tensor.hpp"

namespace xlner {

/// Probability distribution over a label set. Produced by softmax and by
/// the teacher-combination path; entries lie in [0,1] and sum to 1.
struct ProbDist {
    std::vector<double> p;

    ProbDist() = default;
    explicit ProbDist(std::vector<double> values) : p(std::move(values)) {}

    std::size_t size() const { return p.size(); }
    double operator[](std::size_t i) const { return p[i]; }
    double& operator[](std::size_t i) { return p[i]; }

    double sum() const;
    bool valid(double tol = 1e-9) const;

    bool operator==(const ProbDist&) const = default;
};

/// Numerically stable softmax (max subtraction). Throws invalid_input on an
/// empty or non-finite argument.
ProbDist softmax(std::span<const double> logits);

/// In-place variant for hot loops; same contract.
void softmax_inplace(std::span<double> x);

/// Mean squared difference over components: (1/n) sum_i (p_i - q_i)^2.
double mse_mean(const ProbDist& p, const ProbDist& q);
double mse_mean(std::span<const double> p, std::span<const double> q);

/// Index of the largest entry; ties break toward the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Floor applied to probabilities inside nll so early iterates cannot
/// produce an infinite loss.
inline constexpr double kNllFloor = 1e-12;

/// Negative log-likelihood -log q_k. Probabilities below kNllFloor are
/// clamped; when that happens and `clamped` is non-null it is set to true.
double nll(const ProbDist& q, std::size_t k, bool* clamped = nullptr);

/// Squared Frobenius norm of (P P^T - I_m) for a rank-2 tensor P (m x K).
double ortho_penalty(const Tensor& p);
/// Gradient of ortho_penalty with respect to P: 4 (P P^T - I) P.
Tensor ortho_penalty_grad(const Tensor& p);

/// Column-Gram variant: squared Frobenius norm of (P^T P - I_K).
double ortho_penalty_colgram(const Tensor& p);
/// Gradient of the column-Gram variant: 4 P (P^T P - I_K).
Tensor ortho_penalty_colgram_grad(const Tensor& p);

/// Adam with decoupled weight decay. Defaults follow common practice; the
/// decay term is applied directly to the parameters, outside the adaptive
/// step.
struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    static AdamState init_like(std::span<const Tensor* const> params);
};

/// One optimizer step over a parameter group. Pure in the sense that equal
/// inputs give bitwise-equal outputs; mutates params and state in place.
/// Throws invalid_input when shapes disagree.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamConfig& cfg);

/// Central finite differences of a scalar function over a parameter group:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate. Parameters are
/// restored on return. The test-side oracle for every analytic gradient.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                     std::span<Tensor* const> params, double eps);

} // namespace xlner
