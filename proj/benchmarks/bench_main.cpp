// Microbenchmarks for the per-token and per-corpus hot paths, at the tensor
// shapes the shipped experiment configs use (embedding 32, radius 2,
// hidden 64, 9 labels). Run ./xlner_bench --benchmark_filter=... to focus.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include <xlner/corpus.hpp>
#include <xlner/distill.hpp>
#include <xlner/ensemble.hpp>
#include <xlner/eval.hpp>
#include <xlner/numerics.hpp>
#include <xlner/rng.hpp>
#include <xlner/tagger.hpp>

using namespace xlner;

namespace {

// One language, a labeled corpus, and its vocabulary; built once and shared.
struct BenchWorld {
    LanguageSpec spec;
    Dataset corpus;
    Vocab vocab;
    TaggerConfig tcfg;
    std::vector<int> sentence; // a typical encoded sentence
    std::vector<Tag> gold;     // its labels
};

const BenchWorld& world() {
    static const BenchWorld w = [] {
        BenchWorld b;
        b.spec = make_language_spec("bench", SpecSizes{120, 40, 12}, 11);
        b.corpus = generate_corpus(b.spec, 200, 12);
        std::vector<const Dataset*> sets{&b.corpus};
        b.vocab = build_vocab(sets, 1);
        b.tcfg.vocab_size = b.vocab.size();
        b.tcfg.embedding_dim = 32;
        b.tcfg.context_radius = 2;
        b.tcfg.hidden_dim = 64;
        const TaggedSentence& longest = *std::max_element(
            b.corpus.sentences.begin(), b.corpus.sentences.end(),
            [](const TaggedSentence& x, const TaggedSentence& y) {
                return x.tokens.size() < y.tokens.size();
            });
        b.sentence = b.vocab.encode(longest);
        b.gold = *longest.labels;
        return b;
    }();
    return w;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = (rng.uniform() - 0.5) * scale;
    return t;
}

} // namespace

static void BM_Softmax(benchmark::State& state) {
    std::vector<double> logits{1.3, -0.7, 2.1, 0.0, -1.5, 0.4, 3.2, -2.0, 0.9};
    for (auto _ : state) {
        ProbDist d = softmax(logits);
        benchmark::DoNotOptimize(d.p.data());
    }
}
BENCHMARK(BM_Softmax)->Unit(benchmark::kNanosecond);

static void BM_PredictDist(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams params = init_params(w.tcfg, 1);
    for (auto _ : state) {
        std::vector<ProbDist> dists = predict_dist(params, w.sentence);
        benchmark::DoNotOptimize(dists.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(w.sentence.size()));
}
BENCHMARK(BM_PredictDist)->Unit(benchmark::kMicrosecond);

static void BM_SupervisedLossGrad(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams params = init_params(w.tcfg, 2);
    TaggerParams grads = TaggerParams::zeros(w.tcfg);
    for (auto _ : state) {
        for (Tensor* b : grads.blocks()) b->fill(0.0);
        double loss = supervised_loss_and_grad(params, w.sentence, w.gold, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(w.sentence.size()));
}
BENCHMARK(BM_SupervisedLossGrad)->Unit(benchmark::kMicrosecond);

static void BM_DistillLossGrad(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams student = init_params(w.tcfg, 3);
    TaggerParams teacher = init_params(w.tcfg, 4);
    const std::vector<ProbDist> targets = predict_dist(teacher, w.sentence);
    TaggerParams grads = TaggerParams::zeros(w.tcfg);
    for (auto _ : state) {
        for (Tensor* b : grads.blocks()) b->fill(0.0);
        double loss = distill_loss_and_grad(student, w.sentence, targets, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(w.sentence.size()));
}
BENCHMARK(BM_DistillLossGrad)->Unit(benchmark::kMicrosecond);

static void BM_AdamStep(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams params = init_params(w.tcfg, 5);
    TaggerParams grads = TaggerParams::zeros(w.tcfg);
    for (Tensor* b : grads.blocks()) b->fill(1e-3);
    auto param_blocks = params.blocks();
    auto grad_blocks = std::as_const(grads).blocks();
    AdamState adam = AdamState::init_like(grad_blocks);
    AdamConfig cfg;
    for (auto _ : state) {
        adam_step(param_blocks, grad_blocks, adam, cfg);
        benchmark::DoNotOptimize(params.embedding.data.data());
    }
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMicrosecond);

static void BM_GenerateCorpus(benchmark::State& state) {
    const BenchWorld& w = world();
    for (auto _ : state) {
        Dataset d = generate_corpus(w.spec, 100, 13);
        benchmark::DoNotOptimize(d.sentences.data());
    }
    state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_GenerateCorpus)->Unit(benchmark::kMicrosecond);

static void BM_SpanF1Report(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams params = init_params(w.tcfg, 6);
    std::vector<std::vector<Tag>> predicted;
    predicted.reserve(w.corpus.sentences.size());
    for (const TaggedSentence& s : w.corpus.sentences)
        predicted.push_back(predict_labels(params, w.vocab.encode(s)));
    for (auto _ : state) {
        F1Report r = f1_report(w.corpus, predicted);
        benchmark::DoNotOptimize(r.overall.correct);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(w.corpus.sentences.size()));
}
BENCHMARK(BM_SpanF1Report)->Unit(benchmark::kMicrosecond);

static void BM_EnsembleDists(benchmark::State& state) {
    const BenchWorld& w = world();
    TaggerParams t0 = init_params(w.tcfg, 7);
    TaggerParams t1 = init_params(w.tcfg, 8);
    TaggerParams t2 = init_params(w.tcfg, 9);
    std::vector<const TaggerParams*> teachers{&t0, &t1, &t2};
    WeightVector weights = uniform_weights(3);
    for (auto _ : state) {
        std::vector<ProbDist> dists =
            ensemble_dists(teachers, weights, w.sentence, LabelMode::Soft);
        benchmark::DoNotOptimize(dists.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(w.sentence.size()));
}
BENCHMARK(BM_EnsembleDists)->Unit(benchmark::kMicrosecond);

static void BM_SimilarityWeights(benchmark::State& state) {
    const BenchWorld& w = world();
    Rng rng(14);
    LangIdParams params;
    params.embedding_table = init_params(w.tcfg, 10).embedding;
    params.u = random_tensor({8, 32}, rng, 0.2);
    params.v = random_tensor({8, 32}, rng, 0.2);
    params.lang_embed = random_tensor({32, 3}, rng, 0.2);
    std::vector<std::vector<int>> target;
    target.reserve(w.corpus.sentences.size());
    for (const TaggedSentence& s : w.corpus.sentences)
        target.push_back(w.vocab.encode(s));
    for (auto _ : state) {
        SimilarityReport report =
            similarity_weights(params, target, TemperatureMode::Variance);
        benchmark::DoNotOptimize(report.weights.alpha.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(target.size()));
}
BENCHMARK(BM_SimilarityWeights)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
