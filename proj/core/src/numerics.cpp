#include "xlner/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace xlner {

double ProbDist::sum() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
}

bool ProbDist::valid(double tol) const {
    if (p.empty()) return false;
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) return false;
    return std::abs(sum() - 1.0) <= tol;
}

void softmax_inplace(std::span<double> x) {
    if (x.empty()) throw invalid_input("softmax: empty input");
    double m = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw invalid_input("softmax: non-finite input");
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

ProbDist softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    softmax_inplace(out);
    return ProbDist(std::move(out));
}

double mse_mean(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw invalid_input("mse_mean: length mismatch");
    if (p.empty()) throw invalid_input("mse_mean: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p[i] - q[i];
        s += d * d;
    }
    return s / static_cast<double>(p.size());
}

double mse_mean(const ProbDist& p, const ProbDist& q) {
    return mse_mean(std::span<const double>(p.p), std::span<const double>(q.p));
}

double nll(const ProbDist& q, std::size_t k, bool* clamped) {
    if (k >= q.size()) throw invalid_input("nll: class index out of range");
    double v = q[k];
    if (v < kNllFloor) {
        v = kNllFloor;
        if (clamped) *clamped = true;
    }
    return -std::log(v);
}

namespace {

void require_rank2(const Tensor& p, const char* who) {
    if (p.rank() != 2) throw invalid_input(std::string(who) + ": expected a rank-2 tensor");
}

// G = P P^T - I_m (m x m), for P of shape m x K.
Tensor row_gram_minus_identity(const Tensor& p) {
    const std::size_t m = p.rows(), k = p.cols();
    Tensor g = Tensor::zeros({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += p.at(i, c) * p.at(j, c);
            g.at(i, j) = s - (i == j ? 1.0 : 0.0);
        }
    return g;
}

// G = P^T P - I_K (K x K).
Tensor col_gram_minus_identity(const Tensor& p) {
    const std::size_t m = p.rows(), k = p.cols();
    Tensor g = Tensor::zeros({k, k});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < m; ++r) s += p.at(r, i) * p.at(r, j);
            g.at(i, j) = s - (i == j ? 1.0 : 0.0);
        }
    return g;
}

double squared_frobenius(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
}

} // namespace

double ortho_penalty(const Tensor& p) {
    require_rank2(p, "ortho_penalty");
    return squared_frobenius(row_gram_minus_identity(p));
}

Tensor ortho_penalty_grad(const Tensor& p) {
    require_rank2(p, "ortho_penalty_grad");
    const std::size_t m = p.rows(), k = p.cols();
    Tensor g = row_gram_minus_identity(p);
    Tensor out = Tensor::zeros({m, k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += g.at(i, j) * p.at(j, c);
            out.at(i, c) = 4.0 * s;
        }
    return out;
}

double ortho_penalty_colgram(const Tensor& p) {
    require_rank2(p, "ortho_penalty_colgram");
    return squared_frobenius(col_gram_minus_identity(p));
}

Tensor ortho_penalty_colgram_grad(const Tensor& p) {
    require_rank2(p, "ortho_penalty_colgram_grad");
    const std::size_t m = p.rows(), k = p.cols();
    Tensor g = col_gram_minus_identity(p);
    Tensor out = Tensor::zeros({m, k});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < k; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += p.at(r, j) * g.at(j, i);
            out.at(r, i) = 4.0 * s;
        }
    return out;
}

AdamState AdamState::init_like(std::span<const Tensor* const> params) {
    AdamState st;
    st.first_moment.reserve(params.size());
    st.second_moment.reserve(params.size());
    for (const Tensor* p : params) {
        st.first_moment.push_back(Tensor::zeros(p->shape));
        st.second_moment.push_back(Tensor::zeros(p->shape));
    }
    return st;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw invalid_input("adam_step: parameter/gradient/state group size mismatch");
    if (!(cfg.learning_rate > 0.0)) throw invalid_input("adam_step: learning rate must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i]))
            throw invalid_input("adam_step: shape mismatch in parameter group");
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& theta = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.learning_rate *
                        (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * theta[j]);
        }
    }
}

std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                     std::span<Tensor* const> params, double eps) {
    if (!(eps > 0.0)) throw invalid_input("finite_diff_grad: eps must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (Tensor* p : params) {
        Tensor g = Tensor::zeros(p->shape);
        for (std::size_t j = 0; j < p->size(); ++j) {
            const double saved = (*p)[j];
            (*p)[j] = saved + eps;
            const double up = f();
            (*p)[j] = saved - eps;
            const double down = f();
            (*p)[j] = saved;
            g[j] = (up - down) / (2.0 * eps);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace xlner
