#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include <xlner/corpus.hpp>
#include <xlner/distill.hpp>
#include <xlner/ensemble.hpp>
#include <xlner/error.hpp>
#include <xlner/eval.hpp>
#include <xlner/numerics.hpp>
#include <xlner/rng.hpp>
#include <xlner/tagger.hpp>

using namespace xlner;

namespace {

// Small self-contained world: one language, a labeled corpus, its vocab.
struct ToyWorld {
    LanguageSpec spec;
    Dataset train;
    Vocab vocab;
    TaggerConfig tcfg;
};

ToyWorld make_world(std::size_t n_sentences, std::uint64_t seed) {
    ToyWorld w;
    SpecSizes sizes;
    sizes.function_words = 20;
    sizes.names_per_type = 8;
    sizes.templates = 6;
    w.spec = make_language_spec("toy", sizes, seed);
    w.train = generate_corpus(w.spec, n_sentences, seed + 1);
    std::vector<const Dataset*> sets{&w.train};
    w.vocab = build_vocab(sets, 1);
    w.tcfg.vocab_size = w.vocab.size();
    w.tcfg.embedding_dim = 16;
    w.tcfg.context_radius = 2;
    w.tcfg.hidden_dim = 24;
    return w;
}

} // namespace

TEST_CASE("harden rounds to a one-hot at the argmax with low-index ties") {
    ProbDist d(std::vector<double>{0.2, 0.5, 0.3});
    ProbDist h = harden(d);
    CHECK(h.p == std::vector<double>{0.0, 1.0, 0.0});

    ProbDist tie(std::vector<double>{0.4, 0.4, 0.2});
    CHECK(harden(tie).p == std::vector<double>{1.0, 0.0, 0.0});

    // Idempotent on one-hots.
    CHECK(harden(h) == h);
}

TEST_CASE("distill loss on a uniform student against a one-hot teacher is 8/81") {
    // Zero parameters give uniform 1/9 distributions; against a one-hot
    // target the per-token MSE is ((1-1/9)^2 + 8*(1/9)^2)/9 = 8/81.
    TaggerConfig cfg;
    cfg.vocab_size = 4;
    cfg.embedding_dim = 2;
    cfg.context_radius = 1;
    cfg.hidden_dim = 2;
    TaggerParams student = TaggerParams::zeros(cfg);

    std::vector<int> ids{2, 3};
    std::vector<ProbDist> targets;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> one_hot(kNumLabels, 0.0);
        one_hot[3] = 1.0;
        targets.emplace_back(one_hot);
    }
    TaggerParams grads = TaggerParams::zeros(cfg);
    double loss = distill_loss_and_grad(student, ids, targets, grads);
    CHECK(loss == doctest::Approx(8.0 / 81.0).epsilon(1e-15));
}

TEST_CASE("self-distillation has zero loss and zero gradient") {
    TaggerConfig cfg;
    cfg.vocab_size = 10;
    cfg.embedding_dim = 4;
    cfg.context_radius = 1;
    cfg.hidden_dim = 6;
    TaggerParams p = init_params(cfg, 3);
    std::vector<int> ids{2, 7, 4};
    std::vector<ProbDist> own = predict_dist(p, ids);

    TaggerParams grads = TaggerParams::zeros(cfg);
    double loss = distill_loss_and_grad(p, ids, own, grads);
    CHECK(loss == 0.0);
    for (const Tensor* b : std::as_const(grads).blocks())
        for (double v : b->data) CHECK(v == 0.0);
}

TEST_CASE("distill gradient agrees with finite differences") {
    TaggerConfig cfg;
    cfg.vocab_size = 6;
    cfg.embedding_dim = 3;
    cfg.context_radius = 1;
    cfg.hidden_dim = 4;
    TaggerParams student = init_params(cfg, 21);
    TaggerParams teacher = init_params(cfg, 22);
    std::vector<int> ids{2, 5, 3};
    std::vector<ProbDist> targets = predict_dist(teacher, ids);

    TaggerParams analytic = TaggerParams::zeros(cfg);
    distill_loss_and_grad(student, ids, targets, analytic);

    auto student_blocks = student.blocks();
    std::vector<Tensor*> params(student_blocks.begin(), student_blocks.end());
    auto f = [&] {
        TaggerParams scratch = TaggerParams::zeros(cfg);
        return distill_loss_and_grad(student, ids, targets, scratch);
    };
    std::vector<Tensor> fd = finite_diff_grad(f, params, 1e-6);

    auto blocks = analytic.blocks();
    for (std::size_t b = 0; b < TaggerParams::num_blocks; ++b)
        for (std::size_t i = 0; i < fd[b].data.size(); ++i)
            CHECK(blocks[b]->data[i] == doctest::Approx(fd[b].data[i]).epsilon(5e-5));
}

TEST_CASE("distill_loss_and_grad validates lengths") {
    TaggerConfig cfg;
    cfg.vocab_size = 4;
    cfg.embedding_dim = 2;
    cfg.context_radius = 1;
    cfg.hidden_dim = 2;
    TaggerParams p = TaggerParams::zeros(cfg);
    TaggerParams grads = TaggerParams::zeros(cfg);
    std::vector<int> ids{2, 3};
    std::vector<ProbDist> one(1, ProbDist(std::vector<double>(kNumLabels, 1.0 / 9.0)));
    CHECK_THROWS_AS(distill_loss_and_grad(p, ids, one, grads), invalid_input);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.validate();
    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.teacher_lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), config_error);

    AdamConfig teacher = cfg.teacher_adam();
    CHECK(teacher.learning_rate == cfg.teacher_lr);
    CHECK(teacher.weight_decay == cfg.weight_decay);
    AdamConfig student = cfg.student_adam();
    CHECK(student.learning_rate == cfg.student_lr);
}

TEST_CASE("train_teacher fits its own corpus") {
    ToyWorld w = make_world(600, 5);
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.epochs = 6; // enough budget to memorise a 600-sentence corpus
    TrainTrace trace;
    TaggerParams teacher = train_teacher(w.train, w.vocab, w.tcfg, cfg, &trace);

    REQUIRE(trace.epoch_losses.size() == cfg.epochs);
    CHECK(trace.epoch_losses.back() < trace.epoch_losses.front());

    std::vector<std::vector<Tag>> predicted;
    for (const auto& s : w.train.sentences)
        predicted.push_back(predict_labels(teacher, w.vocab.encode(s)));
    F1Report report = f1_report(w.train, predicted);
    CHECK(report.overall.f1() >= 0.95);
}

TEST_CASE("training is deterministic in the seed") {
    ToyWorld w = make_world(80, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 6;
    TaggerParams a = train_teacher(w.train, w.vocab, w.tcfg, cfg);
    TaggerParams b = train_teacher(w.train, w.vocab, w.tcfg, cfg);
    CHECK(a == b);

    TrainConfig other = cfg;
    other.seed = 7;
    CHECK(train_teacher(w.train, w.vocab, w.tcfg, other) != a);

    Dataset unlabeled = w.train.without_labels();
    TaggerParams s1 = train_student(a, unlabeled, w.vocab, w.tcfg, cfg);
    TaggerParams s2 = train_student(a, unlabeled, w.vocab, w.tcfg, cfg);
    CHECK(s1 == s2);
}

TEST_CASE("zero-epoch training returns the seed initialization") {
    ToyWorld w = make_world(40, 8);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 8;
    TaggerParams teacher = train_teacher(w.train, w.vocab, w.tcfg, cfg);
    CHECK(teacher == init_params(w.tcfg, mix_seed(cfg.seed, "init")));

    Dataset unlabeled = w.train.without_labels();
    TaggerParams frozen = init_params(w.tcfg, 99);
    TaggerParams student = train_student(frozen, unlabeled, w.vocab, w.tcfg, cfg);
    CHECK(student == init_params(w.tcfg, mix_seed(cfg.seed, "init")));

    TrainConfig warm = cfg;
    warm.init_student_from_teacher = true;
    TaggerParams warm_student = train_student(frozen, unlabeled, w.vocab, w.tcfg, warm);
    CHECK(warm_student == frozen);
}

TEST_CASE("soft and hard modes coincide bitwise when teachers are already one-hot") {
    // Making the classifier bias gaps enormous drives every non-argmax
    // probability to exactly zero in double arithmetic, so hardening is the
    // identity and both modes must follow bitwise-identical trajectories.
    ToyWorld w = make_world(60, 9);
    TaggerParams teacher = init_params(w.tcfg, 42);
    for (std::size_t r = 0; r < kNumLabels; ++r)
        teacher.classifier_bias.data[r] = -2000.0 * static_cast<double>(r);

    std::vector<int> probe = w.vocab.encode(w.train.sentences[0]);
    for (const ProbDist& d : predict_dist(teacher, probe)) {
        CHECK(d[0] == 1.0);
        for (std::size_t c = 1; c < kNumLabels; ++c) CHECK(d[c] == 0.0);
    }

    Dataset unlabeled = w.train.without_labels();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    cfg.label_mode = LabelMode::Soft;
    TaggerParams soft = train_student(teacher, unlabeled, w.vocab, w.tcfg, cfg);
    cfg.label_mode = LabelMode::Hard;
    TaggerParams hard = train_student(teacher, unlabeled, w.vocab, w.tcfg, cfg);
    CHECK(soft == hard);
}

TEST_CASE("ensemble_dists computes the weighted teacher average") {
    ToyWorld w = make_world(30, 12);
    TaggerParams t1 = init_params(w.tcfg, 1);
    TaggerParams t2 = init_params(w.tcfg, 2);
    std::vector<const TaggerParams*> teachers{&t1, &t2};
    WeightVector weights;
    weights.alpha = {0.3, 0.7};

    std::vector<int> ids = w.vocab.encode(w.train.sentences[0]);
    std::vector<ProbDist> combined = ensemble_dists(teachers, weights, ids, LabelMode::Soft);
    std::vector<ProbDist> d1 = predict_dist(t1, ids);
    std::vector<ProbDist> d2 = predict_dist(t2, ids);

    REQUIRE(combined.size() == ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(combined[i].valid(1e-12));
        for (std::size_t c = 0; c < kNumLabels; ++c)
            CHECK(combined[i][c] ==
                  doctest::Approx(0.3 * d1[i][c] + 0.7 * d2[i][c]).epsilon(1e-14));
    }

    std::vector<ProbDist> hard = ensemble_dists(teachers, weights, ids, LabelMode::Hard);
    std::vector<ProbDist> h1 = predict_dist(t1, ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ProbDist r1 = harden(d1[i]);
        ProbDist r2 = harden(d2[i]);
        for (std::size_t c = 0; c < kNumLabels; ++c)
            CHECK(hard[i][c] == doctest::Approx(0.3 * r1[c] + 0.7 * r2[c]).epsilon(1e-14));
    }
}

TEST_CASE("training rejects inconsistent arguments") {
    ToyWorld w = make_world(20, 13);
    TrainConfig cfg;
    cfg.epochs = 1;

    // Student training requires an unlabeled target corpus.
    TaggerParams teacher = init_params(w.tcfg, 1);
    CHECK_THROWS_AS(train_student(teacher, w.train, w.vocab, w.tcfg, cfg), invalid_input);

    // Teacher training requires labels.
    Dataset unlabeled = w.train.without_labels();
    CHECK_THROWS_AS(train_teacher(unlabeled, w.vocab, w.tcfg, cfg), invalid_input);

    // No teachers.
    std::vector<const TaggerParams*> none;
    WeightVector empty;
    CHECK_THROWS_AS(train_student(none, empty, unlabeled, w.vocab, w.tcfg, cfg),
                    invalid_input);

    // Teacher/weight count mismatch.
    std::vector<const TaggerParams*> one{&teacher};
    WeightVector two;
    two.alpha = {0.5, 0.5};
    CHECK_THROWS_AS(train_student(one, two, unlabeled, w.vocab, w.tcfg, cfg), invalid_input);
    std::vector<int> ids{2, 3};
    CHECK_THROWS_AS(ensemble_dists(one, two, ids, LabelMode::Soft), invalid_input);

    // Word dropout outside [0, 1).
    TrainConfig bad = cfg;
    bad.word_dropout = 1.0;
    CHECK_THROWS_AS(train_teacher(w.train, w.vocab, w.tcfg, bad), config_error);
    bad.word_dropout = -0.1;
    CHECK_THROWS_AS(train_student(teacher, unlabeled, w.vocab, w.tcfg, bad), config_error);
}
