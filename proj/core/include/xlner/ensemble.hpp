#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xlner/corpus.hpp"
#include "xlner/numerics.hpp"
#include "xlner/tagger.hpp"
#include "xlner/tensor.hpp"

namespace xlner {

/// Convex weights over the K teachers.
struct WeightVector {
    std::vector<double> alpha;

    std::size_t size() const { return alpha.size(); }
    double operator[](std::size_t k) const { return alpha[k]; }

    /// Throws invalid_input when any entry is negative or the sum strays
    /// from 1 by more than tol.
    void validate(double tol = 1e-12) const;

    bool operator==(const WeightVector&) const = default;
};

/// Every entry 1/K.
WeightVector uniform_weights(std::size_t k);

/// Weighted sum of per-token teacher distributions.
ProbDist combine(std::span<const ProbDist> dists, const WeightVector& weights);

/// Bag-of-words mean of the embedding rows of the sentence's tokens.
std::vector<double> sentence_embedding(const Tensor& table, std::span<const int> ids);

/// (U g)^T (V mu): the bilinear score g^T U^T V mu without materializing
/// the m x m operator.
double bilinear_similarity(std::span<const double> g_vec, const Tensor& u, const Tensor& v,
                           std::span<const double> mu);

/// Language-identification head: a frozen sentence-embedding table plus the
/// trainable low-rank bilinear factors and per-language embeddings.
struct LangIdParams {
    Tensor embedding_table; // V x m, frozen
    Tensor u;               // d x m
    Tensor v;               // d x m
    Tensor lang_embed;      // m x K, column k is the language embedding

    std::size_t num_languages() const { return lang_embed.cols(); }
    std::size_t embedding_dim() const { return embedding_table.cols(); }

    /// Throws invalid_input when block shapes disagree.
    void validate() const;

    bool operator==(const LangIdParams&) const = default;
};

/// Gradients for the trainable blocks of LangIdParams.
struct LangIdGrads {
    Tensor u;
    Tensor v;
    Tensor lang_embed;
};

enum class TemperatureMode { Variance, Fixed };

/// Which Gram matrix the orthogonality penalty uses: the literal row form
/// P P^T - I_m, or the column form P^T P - I_K.
enum class OrthoVariant { RowGram, ColGram };

struct LangIdConfig {
    std::size_t rank = 8;
    double gamma = 0.01;
    OrthoVariant ortho = OrthoVariant::RowGram;
    TemperatureMode temperature = TemperatureMode::Variance;
    double fixed_tau = 1.0;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Cross-entropy of the language classifier over a batch plus the
/// orthogonality penalty: (1/Z) sum -log q_k + gamma * penalty(P).
/// Gradients accumulate into `grads`; the embedding table is frozen.
double langid_loss_and_grad(const LangIdParams& params,
                            std::span<const std::vector<int>> sentences,
                            std::span<const std::size_t> lang, double gamma, OrthoVariant ortho,
                            LangIdGrads& grads);

/// Column k = mean sentence embedding of language k's sentences.
Tensor init_language_embeddings(const Tensor& table,
                                std::span<const std::vector<std::vector<int>>> languages);

/// Element-wise average of the teachers' embedding tables; the frozen
/// sentence-embedding space used by the language-ID head.
Tensor make_shared_embedding(std::span<const TaggerParams* const> teachers);

/// Train the language-ID head on the union of the source corpora, each
/// sentence labeled with its language index. Requires K >= 2.
LangIdParams train_langid(std::span<const Dataset* const> sources, const Vocab& vocab,
                          const Tensor& embedding_table, const LangIdConfig& cfg);

/// similarity_weights output plus everything a weights report needs.
struct SimilarityReport {
    WeightVector weights;
    double tau = 0.0;
    bool degenerate = false; // temperature collapsed; weights fell back to uniform
    /// Per-source summary over the target corpus similarities.
    std::vector<double> similarity_min;
    std::vector<double> similarity_mean;
    std::vector<double> similarity_max;
};

/// Per-sentence softmax of similarities at temperature tau, averaged over
/// the target corpus. Variance mode sets tau to the population variance of
/// all |D_tgt| * K similarity values; a degenerate variance (< 1e-12) falls
/// back to uniform weights with the report flagged.
SimilarityReport similarity_weights(const LangIdParams& params,
                                    std::span<const std::vector<int>> target_sentences,
                                    TemperatureMode mode, double fixed_tau = 1.0);

} // namespace xlner
