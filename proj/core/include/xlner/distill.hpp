#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xlner/corpus.hpp"
#include "xlner/ensemble.hpp"
#include "xlner/numerics.hpp"
#include "xlner/tagger.hpp"

namespace xlner {

/// Whether the student learns from full teacher distributions or their
/// one-hot roundings.
enum class LabelMode { Soft, Hard };

/// Shared hyperparameters for the teacher and student training loops.
struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 3;
    double teacher_lr = 5e-3;
    double student_lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    LabelMode label_mode = LabelMode::Soft;
    /// Default is training the student from scratch; set to start from the
    /// first teacher's weights instead.
    bool init_student_from_teacher = false;
    /// Training-time input corruption: each non-reserved token id is replaced
    /// by the unknown id with this probability, resampled per visit. For the
    /// teacher this trains the unknown-word response it falls back on outside
    /// its own language. For the student the targets stay computed on the
    /// clean sentence, so it doubles as a denoising objective that pushes the
    /// teachers' context evidence into the student's word embeddings.
    double word_dropout = 0.1;

    /// Boundary validation: positive rates and batch size, epochs >= 1.
    void validate() const;

    AdamConfig teacher_adam() const;
    AdamConfig student_adam() const;
};

/// Per-epoch mean sentence loss, recorded by the training loops on request.
struct TrainTrace {
    std::vector<double> epoch_losses;
};

/// Token-averaged MSE between the student's distributions and fixed teacher
/// distributions: (1/L) sum_i mse_mean(p_hat_i, p_tilde_i). Gradients for
/// all student parameters accumulate into `grads`.
double distill_loss_and_grad(const TaggerParams& student, std::span<const int> ids,
                             std::span<const ProbDist> teacher_dists, TaggerParams& grads);

/// One-hot rounding at the argmax, ties toward the lowest index.
ProbDist harden(const ProbDist& dist);

/// Supervised training on a labeled corpus: shuffled mini-batches of
/// token NLL under Adam with decoupled weight decay. Deterministic per seed.
TaggerParams train_teacher(const Dataset& data, const Vocab& vocab, const TaggerConfig& tcfg,
                           const TrainConfig& cfg, TrainTrace* trace = nullptr);

/// Distillation on an unlabeled target corpus against a weighted teacher
/// ensemble. Teacher distributions are recomputed per epoch (teachers are
/// frozen); in hard mode each teacher's per-token distribution is rounded
/// one-hot before combination.
TaggerParams train_student(std::span<const TaggerParams* const> teachers,
                           const WeightVector& weights, const Dataset& target,
                           const Vocab& vocab, const TaggerConfig& tcfg, const TrainConfig& cfg,
                           TrainTrace* trace = nullptr);

/// Single-teacher convenience wrapper.
TaggerParams train_student(const TaggerParams& teacher, const Dataset& target,
                           const Vocab& vocab, const TaggerConfig& tcfg, const TrainConfig& cfg,
                           TrainTrace* trace = nullptr);

/// Per-token ensemble distributions for one sentence: each teacher's
/// predictions (hardened first in hard mode) combined with the weights.
std::vector<ProbDist> ensemble_dists(std::span<const TaggerParams* const> teachers,
                                     const WeightVector& weights, std::span<const int> ids,
                                     LabelMode mode);

} // namespace xlner
