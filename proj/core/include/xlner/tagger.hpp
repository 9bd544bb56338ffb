#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "xlner/corpus.hpp"
#include "xlner/numerics.hpp"
#include "xlner/tensor.hpp"

namespace xlner {

/// Window feedforward tagger: each token is classified from the embeddings
/// of a (2r+1)-token window through one tanh layer and a linear softmax
/// head. Teachers and students share this architecture and one vocabulary.
struct TaggerConfig {
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 32;
    std::size_t context_radius = 2;
    std::size_t hidden_dim = 64;

    static constexpr std::size_t num_labels = kNumLabels;

    std::size_t window_width() const { return 2 * context_radius + 1; }
    std::size_t concat_dim() const { return window_width() * embedding_dim; }

    /// Throws config_error on a non-positive dimension.
    void validate() const;

    bool operator==(const TaggerConfig&) const = default;
};

/// All parameters of one tagger. The block order is the canonical parameter
/// ordering used by the optimizer, gradient checks, and checkpoints.
struct TaggerParams {
    Tensor embedding;         // V x m
    Tensor encoder_weight;    // H x (2r+1)m
    Tensor encoder_bias;      // H
    Tensor classifier_weight; // |C| x H
    Tensor classifier_bias;   // |C|

    static constexpr std::size_t num_blocks = 5;
    static constexpr std::array<std::string_view, num_blocks> block_names = {
        "embedding", "encoder_weight", "encoder_bias", "classifier_weight", "classifier_bias"};

    std::array<Tensor*, num_blocks> blocks();
    std::array<const Tensor*, num_blocks> blocks() const;

    /// Config recovered from the stored shapes. Throws invalid_input when
    /// the shapes are not mutually consistent.
    TaggerConfig config() const;

    /// Zero-filled parameters of the given geometry (gradient accumulators).
    static TaggerParams zeros(const TaggerConfig& cfg);

    void fill(double value);

    bool operator==(const TaggerParams&) const = default;
};

/// Xavier-uniform weights (limit sqrt(6/(rows+cols))), zero biases.
/// Deterministic per seed.
TaggerParams init_params(const TaggerConfig& cfg, std::uint64_t seed);

/// Intermediate activations of one sentence, kept for the backward pass.
struct ForwardCache {
    std::vector<int> window_ids; // L x (2r+1), boundary id at out-of-range
    Tensor concat;               // L x (2r+1)m
    Tensor hidden;               // L x H
    Tensor probs;                // L x |C|
};

/// Full forward pass; throws invalid_input on an empty sentence or an id
/// outside [0, V).
void forward(const TaggerParams& params, std::span<const int> ids, ForwardCache& cache);

/// Hidden vectors h_i = tanh(W1 concat(E[x_{i-r}..x_{i+r}]) + b1), L x H.
Tensor encode(const TaggerParams& params, std::span<const int> ids);

/// Per-token label distributions softmax(W h_i + b).
std::vector<ProbDist> predict_dist(const TaggerParams& params, std::span<const int> ids);

/// Argmax labels, ties toward the lowest label index.
std::vector<Tag> predict_labels(const TaggerParams& params, std::span<const int> ids);

/// Backpropagate from d(loss)/d(logits) (L x |C|) through the network,
/// accumulating into `grads` (which must match the parameter geometry).
void backward_from_dlogits(const TaggerParams& params, const ForwardCache& cache,
                           const Tensor& dlogits, TaggerParams& grads);

/// Token-averaged negative log-likelihood of the gold labels plus its
/// gradient, accumulated into `grads`. Returns the loss.
double supervised_loss_and_grad(const TaggerParams& params, std::span<const int> ids,
                                std::span<const Tag> gold, TaggerParams& grads);

/// Overwrite the embedding rows of unseen vocabulary ids with the unknown
/// row: a model queried outside its training support then falls back on
/// its trained unknown-word response instead of untrained initialization.
/// The reserved ids (boundary, unknown) always count as seen. `seen` must
/// have one entry per vocabulary id.
void collapse_unseen_rows(TaggerParams& params, const std::vector<bool>& seen);

} // namespace xlner
