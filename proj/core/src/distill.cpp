#include "xlner/distill.hpp"

#include <algorithm>
#include <cmath>

#include "xlner/rng.hpp"

namespace xlner {

void TrainConfig::validate() const {
    if (batch_size == 0) throw config_error("TrainConfig: batch size must be positive");
    if (epochs == 0) throw config_error("TrainConfig: epochs must be at least 1");
    if (!(teacher_lr > 0.0) || !(student_lr > 0.0))
        throw config_error("TrainConfig: learning rates must be positive");
    if (!(word_dropout >= 0.0 && word_dropout < 1.0))
        throw config_error("TrainConfig: word dropout must lie in [0, 1)");
}

AdamConfig TrainConfig::teacher_adam() const {
    return AdamConfig{teacher_lr, beta1, beta2, epsilon, weight_decay};
}

AdamConfig TrainConfig::student_adam() const {
    return AdamConfig{student_lr, beta1, beta2, epsilon, weight_decay};
}

double distill_loss_and_grad(const TaggerParams& student, std::span<const int> ids,
                             std::span<const ProbDist> teacher_dists, TaggerParams& grads) {
    if (teacher_dists.size() != ids.size())
        throw invalid_input("distill_loss_and_grad: need one teacher distribution per token");
    ForwardCache cache;
    forward(student, ids, cache);

    constexpr std::size_t n_labels = TaggerConfig::num_labels;
    const std::size_t len = ids.size();
    const double scale = 1.0 / (static_cast<double>(len) * static_cast<double>(n_labels));

    double loss = 0.0;
    Tensor dlogits = Tensor::zeros({len, n_labels});
    std::vector<double> dp(n_labels);
    for (std::size_t i = 0; i < len; ++i) {
        if (teacher_dists[i].size() != n_labels)
            throw invalid_input("distill_loss_and_grad: teacher distribution length mismatch");
        const double* p = &cache.probs.data[i * n_labels];
        double dot = 0.0;
        for (std::size_t c = 0; c < n_labels; ++c) {
            const double diff = p[c] - teacher_dists[i][c];
            loss += diff * diff * scale;
            dp[c] = 2.0 * diff * scale; // d loss / d p_hat
            dot += dp[c] * p[c];
        }
        // Through the softmax: dz_c = p_c (dp_c - dp . p).
        double* dl = &dlogits.data[i * n_labels];
        for (std::size_t c = 0; c < n_labels; ++c) dl[c] = p[c] * (dp[c] - dot);
    }
    backward_from_dlogits(student, cache, dlogits, grads);
    return loss;
}

ProbDist harden(const ProbDist& dist) {
    if (dist.size() == 0) throw invalid_input("harden: empty distribution");
    ProbDist out(std::vector<double>(dist.size(), 0.0));
    out[argmax(dist.p)] = 1.0;
    return out;
}

namespace {

TaggerParams run_training(const TaggerConfig& tcfg, const TrainConfig& cfg, std::size_t n_items,
                          TaggerParams init, const AdamConfig& adam,
                          const std::function<double(std::size_t item, const TaggerParams&,
                                                     TaggerParams&)>& item_loss_and_grad,
                          TrainTrace* trace) {
    TaggerParams params = std::move(init);
    TaggerParams grads = TaggerParams::zeros(tcfg);
    AdamState state = AdamState::init_like(params.blocks());
    Rng rng(cfg.seed);

    std::vector<std::size_t> order(n_items);
    for (std::size_t i = 0; i < n_items; ++i) order[i] = i;

    if (trace) trace->epoch_losses.clear();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_items; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n_items);
            grads.fill(0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i)
                batch_loss += item_loss_and_grad(order[i], params, grads);
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (Tensor* g : grads.blocks())
                for (double& x : g->data) x *= inv;
            adam_step(params.blocks(),
                      std::array<const Tensor*, TaggerParams::num_blocks>{
                          &grads.embedding, &grads.encoder_weight, &grads.encoder_bias,
                          &grads.classifier_weight, &grads.classifier_bias},
                      state, adam);
            epoch_loss += batch_loss;
        }
        if (trace) trace->epoch_losses.push_back(epoch_loss / static_cast<double>(n_items));
    }
    return params;
}

} // namespace

TaggerParams train_teacher(const Dataset& data, const Vocab& vocab, const TaggerConfig& tcfg,
                           const TrainConfig& cfg, TrainTrace* trace) {
    if (!data.labeled) throw invalid_input("train_teacher: needs a labeled dataset");
    data.validate();
    if (!(cfg.teacher_lr > 0.0)) throw config_error("train_teacher: learning rate must be > 0");
    if (cfg.batch_size == 0) throw config_error("train_teacher: batch size must be positive");
    if (!(cfg.word_dropout >= 0.0 && cfg.word_dropout < 1.0))
        throw config_error("train_teacher: word dropout must lie in [0, 1)");

    std::vector<std::vector<int>> ids;
    ids.reserve(data.sentences.size());
    for (const TaggedSentence& s : data.sentences) ids.push_back(vocab.encode(s));

    TaggerParams init = init_params(tcfg, mix_seed(cfg.seed, "init"));
    Rng dropout_rng(mix_seed(cfg.seed, "word-dropout"));
    std::vector<int> corrupted;
    return run_training(
        tcfg, cfg, data.sentences.size(), std::move(init), cfg.teacher_adam(),
        [&](std::size_t i, const TaggerParams& params, TaggerParams& grads) {
            if (cfg.word_dropout == 0.0)
                return supervised_loss_and_grad(params, ids[i], *data.sentences[i].labels, grads);
            corrupted = ids[i];
            for (int& id : corrupted)
                if (id >= 2 && dropout_rng.uniform() < cfg.word_dropout) id = Vocab::kUnknownId;
            return supervised_loss_and_grad(params, corrupted, *data.sentences[i].labels, grads);
        },
        trace);
}

std::vector<ProbDist> ensemble_dists(std::span<const TaggerParams* const> teachers,
                                     const WeightVector& weights, std::span<const int> ids,
                                     LabelMode mode) {
    if (teachers.empty()) throw invalid_input("ensemble_dists: no teachers");
    if (teachers.size() != weights.size())
        throw invalid_input("ensemble_dists: need one weight per teacher");

    std::vector<std::vector<ProbDist>> per_teacher;
    per_teacher.reserve(teachers.size());
    for (const TaggerParams* t : teachers) {
        std::vector<ProbDist> dists = predict_dist(*t, ids);
        if (mode == LabelMode::Hard)
            for (ProbDist& d : dists) d = harden(d);
        per_teacher.push_back(std::move(dists));
    }

    std::vector<ProbDist> out;
    out.reserve(ids.size());
    std::vector<ProbDist> token_dists(teachers.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t k = 0; k < teachers.size(); ++k) token_dists[k] = per_teacher[k][i];
        out.push_back(combine(token_dists, weights));
    }
    return out;
}

TaggerParams train_student(std::span<const TaggerParams* const> teachers,
                           const WeightVector& weights, const Dataset& target,
                           const Vocab& vocab, const TaggerConfig& tcfg, const TrainConfig& cfg,
                           TrainTrace* trace) {
    if (teachers.empty()) throw invalid_input("train_student: no teachers");
    weights.validate(1e-9);
    if (target.labeled) throw invalid_input("train_student: target dataset must be unlabeled");
    target.validate();
    if (!(cfg.student_lr > 0.0)) throw config_error("train_student: learning rate must be > 0");
    if (cfg.batch_size == 0) throw config_error("train_student: batch size must be positive");
    if (!(cfg.word_dropout >= 0.0 && cfg.word_dropout < 1.0))
        throw config_error("train_student: word dropout must lie in [0, 1)");

    std::vector<std::vector<int>> ids;
    ids.reserve(target.sentences.size());
    for (const TaggedSentence& s : target.sentences) ids.push_back(vocab.encode(s));

    TaggerParams init = cfg.init_student_from_teacher
                            ? *teachers[0]
                            : init_params(tcfg, mix_seed(cfg.seed, "init"));
    Rng dropout_rng(mix_seed(cfg.seed, "word-dropout"));
    std::vector<int> corrupted;
    return run_training(
        tcfg, cfg, target.sentences.size(), std::move(init), cfg.student_adam(),
        [&](std::size_t i, const TaggerParams& params, TaggerParams& grads) {
            // Targets always come from the clean sentence; only the student's view is
            // corrupted. Reconstructing the teachers' clean-context output from a window
            // with words blanked out pushes that evidence into the student's own word
            // embeddings, where it accumulates across every occurrence of the word.
            const std::vector<ProbDist> dists =
                ensemble_dists(teachers, weights, ids[i], cfg.label_mode);
            if (cfg.word_dropout == 0.0)
                return distill_loss_and_grad(params, ids[i], dists, grads);
            corrupted = ids[i];
            for (int& id : corrupted)
                if (id >= 2 && dropout_rng.uniform() < cfg.word_dropout) id = Vocab::kUnknownId;
            return distill_loss_and_grad(params, corrupted, dists, grads);
        },
        trace);
}

TaggerParams train_student(const TaggerParams& teacher, const Dataset& target,
                           const Vocab& vocab, const TaggerConfig& tcfg, const TrainConfig& cfg,
                           TrainTrace* trace) {
    const TaggerParams* one = &teacher;
    return train_student(std::span<const TaggerParams* const>(&one, 1), uniform_weights(1),
                         target, vocab, tcfg, cfg, trace);
}

} // namespace xlner
