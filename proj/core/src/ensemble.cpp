#include "xlner/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xlner/rng.hpp"

namespace xlner {

void WeightVector::validate(double tol) const {
    if (alpha.empty()) throw invalid_input("WeightVector: empty");
    double sum = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0)) throw invalid_input("WeightVector: negative entry");
        sum += a;
    }
    if (std::abs(sum - 1.0) > tol) throw invalid_input("WeightVector: entries do not sum to 1");
}

WeightVector uniform_weights(std::size_t k) {
    if (k == 0) throw invalid_input("uniform_weights: K must be positive");
    return WeightVector{std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

ProbDist combine(std::span<const ProbDist> dists, const WeightVector& weights) {
    if (dists.size() != weights.size())
        throw invalid_input("combine: need one weight per distribution");
    if (dists.empty()) throw invalid_input("combine: no distributions");
    const std::size_t n = dists[0].size();
    ProbDist out(std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < dists.size(); ++k) {
        if (dists[k].size() != n) throw invalid_input("combine: distribution length mismatch");
        for (std::size_t c = 0; c < n; ++c) out[c] += weights[k] * dists[k][c];
    }
    return out;
}

std::vector<double> sentence_embedding(const Tensor& table, std::span<const int> ids) {
    if (ids.empty()) throw invalid_input("sentence_embedding: empty sentence");
    const std::size_t m = table.cols();
    const std::size_t rows = table.rows();
    std::vector<double> g(m, 0.0);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows)
            throw invalid_input("sentence_embedding: token id outside table");
        const double* row = &table.data[static_cast<std::size_t>(id) * m];
        for (std::size_t d = 0; d < m; ++d) g[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (double& x : g) x *= inv;
    return g;
}

double bilinear_similarity(std::span<const double> g_vec, const Tensor& u, const Tensor& v,
                           std::span<const double> mu) {
    const std::size_t d = u.rows();
    const std::size_t m = u.cols();
    if (v.rows() != d || v.cols() != m || g_vec.size() != m || mu.size() != m)
        throw invalid_input("bilinear_similarity: shape mismatch");
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        double ug = 0.0;
        double vmu = 0.0;
        const double* urow = &u.data[r * m];
        const double* vrow = &v.data[r * m];
        for (std::size_t c = 0; c < m; ++c) {
            ug += urow[c] * g_vec[c];
            vmu += vrow[c] * mu[c];
        }
        s += ug * vmu;
    }
    return s;
}

void LangIdParams::validate() const {
    const std::size_t m = embedding_table.cols();
    if (u.rank() != 2 || v.rank() != 2 || lang_embed.rank() != 2 || u.cols() != m ||
        v.cols() != m || v.rows() != u.rows() || lang_embed.rows() != m ||
        lang_embed.cols() == 0)
        throw invalid_input("LangIdParams: inconsistent block shapes");
}

void LangIdConfig::validate() const {
    if (rank == 0) throw config_error("LangIdConfig: rank must be positive");
    if (!(gamma >= 0.0)) throw config_error("LangIdConfig: gamma must be non-negative");
    if (batch_size == 0) throw config_error("LangIdConfig: batch size must be positive");
    if (!(learning_rate > 0.0)) throw config_error("LangIdConfig: learning rate must be positive");
    if (temperature == TemperatureMode::Fixed && !(fixed_tau > 0.0))
        throw config_error("LangIdConfig: fixed tau must be positive");
}

double langid_loss_and_grad(const LangIdParams& params,
                            std::span<const std::vector<int>> sentences,
                            std::span<const std::size_t> lang, double gamma, OrthoVariant ortho,
                            LangIdGrads& grads) {
    params.validate();
    if (sentences.empty()) throw invalid_input("langid_loss_and_grad: empty batch");
    if (sentences.size() != lang.size())
        throw invalid_input("langid_loss_and_grad: sentence/label count mismatch");
    const std::size_t k_langs = params.num_languages();
    const std::size_t d = params.u.rows();
    const std::size_t m = params.u.cols();
    const double inv_z = 1.0 / static_cast<double>(sentences.size());

    double loss = 0.0;
    std::vector<double> a(d), dl_ds(k_langs), da(d);

    // b_j = V mu_j is shared by every example in the batch.
    Tensor b = Tensor::zeros({k_langs, d});
    for (std::size_t j = 0; j < k_langs; ++j)
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            const double* vrow = &params.v.data[r * m];
            for (std::size_t c = 0; c < m; ++c)
                acc += vrow[c] * params.lang_embed.data[c * k_langs + j];
            b.data[j * d + r] = acc;
        }

    for (std::size_t ex = 0; ex < sentences.size(); ++ex) {
        const std::size_t k = lang[ex];
        if (k >= k_langs) throw invalid_input("langid_loss_and_grad: language index out of range");
        const std::vector<double> g = sentence_embedding(params.embedding_table, sentences[ex]);

        // a = U g ; s_j = a . b_j
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            const double* urow = &params.u.data[r * m];
            for (std::size_t c = 0; c < m; ++c) acc += urow[c] * g[c];
            a[r] = acc;
        }

        std::vector<double> s(k_langs, 0.0);
        for (std::size_t j = 0; j < k_langs; ++j)
            for (std::size_t r = 0; r < d; ++r) s[j] += a[r] * b.data[j * d + r];
        softmax_inplace(s);

        loss += -std::log(std::max(s[k], kNllFloor)) * inv_z;
        for (std::size_t j = 0; j < k_langs; ++j)
            dl_ds[j] = (s[j] - (j == k ? 1.0 : 0.0)) * inv_z;

        // dU += (sum_j dl_ds_j b_j) g^T ; dV += sum_j dl_ds_j a mu_j^T ;
        // dmu_j += dl_ds_j V^T a
        std::fill(da.begin(), da.end(), 0.0);
        for (std::size_t j = 0; j < k_langs; ++j)
            for (std::size_t r = 0; r < d; ++r) da[r] += dl_ds[j] * b.data[j * d + r];
        for (std::size_t r = 0; r < d; ++r) {
            double* gu = &grads.u.data[r * m];
            for (std::size_t c = 0; c < m; ++c) gu[c] += da[r] * g[c];
        }
        for (std::size_t j = 0; j < k_langs; ++j) {
            const double w = dl_ds[j];
            if (w == 0.0) continue;
            for (std::size_t r = 0; r < d; ++r) {
                const double wa = w * a[r];
                double* gv = &grads.v.data[r * m];
                const double* vrow = &params.v.data[r * m];
                for (std::size_t c = 0; c < m; ++c) {
                    gv[c] += wa * params.lang_embed.data[c * k_langs + j];
                    grads.lang_embed.data[c * k_langs + j] += wa * vrow[c];
                }
            }
        }
    }

    if (gamma > 0.0) {
        const Tensor pen_grad = ortho == OrthoVariant::RowGram
                                    ? ortho_penalty_grad(params.lang_embed)
                                    : ortho_penalty_colgram_grad(params.lang_embed);
        const double pen = ortho == OrthoVariant::RowGram
                               ? ortho_penalty(params.lang_embed)
                               : ortho_penalty_colgram(params.lang_embed);
        loss += gamma * pen;
        for (std::size_t i = 0; i < pen_grad.size(); ++i)
            grads.lang_embed.data[i] += gamma * pen_grad.data[i];
    }
    return loss;
}

Tensor init_language_embeddings(const Tensor& table,
                                std::span<const std::vector<std::vector<int>>> languages) {
    if (languages.empty()) throw invalid_input("init_language_embeddings: no languages");
    const std::size_t m = table.cols();
    const std::size_t k_langs = languages.size();
    Tensor p = Tensor::zeros({m, k_langs});
    for (std::size_t k = 0; k < k_langs; ++k) {
        const auto& sents = languages[k];
        if (sents.empty()) throw invalid_input("init_language_embeddings: empty dataset");
        std::vector<double> mu(m, 0.0);
        for (const auto& ids : sents) {
            const std::vector<double> g = sentence_embedding(table, ids);
            for (std::size_t d = 0; d < m; ++d) mu[d] += g[d];
        }
        const double inv = 1.0 / static_cast<double>(sents.size());
        for (std::size_t d = 0; d < m; ++d) p.data[d * k_langs + k] = mu[d] * inv;
    }
    return p;
}

Tensor make_shared_embedding(std::span<const TaggerParams* const> teachers) {
    if (teachers.empty()) throw invalid_input("make_shared_embedding: no teachers");
    Tensor avg = Tensor::zeros(teachers[0]->embedding.shape);
    for (const TaggerParams* t : teachers) {
        if (t->embedding.shape != avg.shape)
            throw invalid_input("make_shared_embedding: embedding shape mismatch");
        for (std::size_t i = 0; i < avg.size(); ++i) avg.data[i] += t->embedding.data[i];
    }
    const double inv = 1.0 / static_cast<double>(teachers.size());
    for (double& x : avg.data) x *= inv;
    return avg;
}

LangIdParams train_langid(std::span<const Dataset* const> sources, const Vocab& vocab,
                          const Tensor& embedding_table, const LangIdConfig& cfg) {
    cfg.validate();
    if (sources.size() < 2)
        throw invalid_input("train_langid: language ID needs at least two source languages");
    const std::size_t m = embedding_table.cols();

    std::vector<std::vector<std::vector<int>>> encoded(sources.size());
    std::vector<std::pair<std::size_t, std::size_t>> examples; // (language, sentence index)
    for (std::size_t k = 0; k < sources.size(); ++k) {
        const Dataset* d = sources[k];
        if (d->sentences.empty()) throw invalid_input("train_langid: empty source dataset");
        encoded[k].reserve(d->sentences.size());
        for (const TaggedSentence& s : d->sentences) {
            encoded[k].push_back(vocab.encode(s));
            examples.emplace_back(k, encoded[k].size() - 1);
        }
    }

    LangIdParams params;
    params.embedding_table = embedding_table;
    params.lang_embed = init_language_embeddings(embedding_table, encoded);
    params.u = Tensor::zeros({cfg.rank, m});
    params.v = Tensor::zeros({cfg.rank, m});
    Rng rng(cfg.seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(cfg.rank + m));
    for (double& x : params.u.data) x = rng.uniform(-limit, limit);
    for (double& x : params.v.data) x = rng.uniform(-limit, limit);

    std::array<Tensor*, 3> trainable = {&params.u, &params.v, &params.lang_embed};
    AdamState state = AdamState::init_like(std::array<const Tensor*, 3>{
        &params.u, &params.v, &params.lang_embed});
    AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    adam.weight_decay = 0.0; // Eq-level regularization is the gamma penalty only

    std::vector<std::vector<int>> batch_sentences;
    std::vector<std::size_t> batch_lang;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(examples);
        for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, examples.size());
            batch_sentences.clear();
            batch_lang.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch_sentences.push_back(encoded[examples[i].first][examples[i].second]);
                batch_lang.push_back(examples[i].first);
            }
            LangIdGrads grads{Tensor::zeros(params.u.shape), Tensor::zeros(params.v.shape),
                              Tensor::zeros(params.lang_embed.shape)};
            langid_loss_and_grad(params, batch_sentences, batch_lang, cfg.gamma, cfg.ortho,
                                 grads);
            adam_step(trainable,
                      std::array<const Tensor*, 3>{&grads.u, &grads.v, &grads.lang_embed}, state,
                      adam);
        }
    }
    return params;
}

SimilarityReport similarity_weights(const LangIdParams& params,
                                    std::span<const std::vector<int>> target_sentences,
                                    TemperatureMode mode, double fixed_tau) {
    params.validate();
    if (target_sentences.empty()) throw invalid_input("similarity_weights: empty target corpus");
    const std::size_t k_langs = params.num_languages();
    const std::size_t n = target_sentences.size();

    // Similarity table, n x K.
    std::vector<double> table(n * k_langs);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> g = sentence_embedding(params.embedding_table,
                                                         target_sentences[i]);
        for (std::size_t k = 0; k < k_langs; ++k) {
            std::vector<double> mu(params.lang_embed.rows());
            for (std::size_t d = 0; d < mu.size(); ++d)
                mu[d] = params.lang_embed.data[d * k_langs + k];
            table[i * k_langs + k] = bilinear_similarity(g, params.u, params.v, mu);
        }
    }

    SimilarityReport report;
    report.similarity_min.assign(k_langs, 0.0);
    report.similarity_mean.assign(k_langs, 0.0);
    report.similarity_max.assign(k_langs, 0.0);
    for (std::size_t k = 0; k < k_langs; ++k) {
        double lo = table[k], hi = table[k], sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = table[i * k_langs + k];
            lo = std::min(lo, s);
            hi = std::max(hi, s);
            sum += s;
        }
        report.similarity_min[k] = lo;
        report.similarity_max[k] = hi;
        report.similarity_mean[k] = sum / static_cast<double>(n);
    }

    double tau;
    if (mode == TemperatureMode::Fixed) {
        if (!(fixed_tau > 0.0)) throw invalid_input("similarity_weights: fixed tau must be > 0");
        tau = fixed_tau;
    } else {
        // Population variance over every similarity value in the table.
        const double count = static_cast<double>(table.size());
        const double mean = std::accumulate(table.begin(), table.end(), 0.0) / count;
        double var = 0.0;
        for (double s : table) var += (s - mean) * (s - mean);
        tau = var / count;
    }
    report.tau = tau;

    if (tau < 1e-12) {
        std::fprintf(stderr,
                     "xlner: warning: similarity variance %.3g is too small to act as a "
                     "temperature; falling back to uniform teacher weights\n",
                     tau);
        report.degenerate = true;
        report.weights = uniform_weights(k_langs);
        return report;
    }

    std::vector<double> alpha(k_langs, 0.0);
    std::vector<double> scaled(k_langs);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < k_langs; ++k) scaled[k] = table[i * k_langs + k] / tau;
        softmax_inplace(scaled);
        for (std::size_t k = 0; k < k_langs; ++k) alpha[k] += scaled[k];
    }
    double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (double& a : alpha) a /= total;
    report.weights = WeightVector{std::move(alpha)};
    report.weights.validate();
    return report;
}

} // namespace xlner
