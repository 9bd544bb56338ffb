#include "xlner/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "xlner/distill.hpp"
#include "xlner/ensemble.hpp"
#include "xlner/numerics.hpp"
#include "xlner/rng.hpp"
#include "xlner/tagger.hpp"

namespace xlner {

bool GradCheckReport::all_passed() const {
    return std::all_of(suites.begin(), suites.end(),
                       [](const GradCheckSuite& s) { return s.passed; });
}

namespace {

constexpr double kDenomFloor = 1e-8;

double rel_error(const Tensor& analytic, const Tensor& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic.data[i];
        const double n = numeric.data[i];
        const double denom = std::max({std::abs(a), std::abs(n), kDenomFloor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

void fill_uniform(Tensor& t, Rng& rng, double half_width) {
    for (double& x : t.data) x = (2.0 * rng.uniform() - 1.0) * half_width;
}

/// Random generic parameter point: unlike the training init, biases are
/// nonzero so the check does not sit at a special point.
TaggerParams random_tagger(const TaggerConfig& cfg, Rng& rng) {
    TaggerParams p = TaggerParams::zeros(cfg);
    for (Tensor* block : p.blocks()) fill_uniform(*block, rng, 0.5);
    return p;
}

std::vector<int> random_sentence(Rng& rng, std::size_t vocab_size, std::size_t min_len,
                                 std::size_t max_len) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::vector<int> ids(len);
    for (int& id : ids) id = static_cast<int>(rng.below(vocab_size));
    return ids;
}

TaggerConfig random_tagger_config(Rng& rng) {
    TaggerConfig cfg;
    cfg.vocab_size = 5 + rng.below(5);
    cfg.embedding_dim = 2 + rng.below(3);
    cfg.context_radius = 1 + rng.below(2);
    cfg.hidden_dim = 3 + rng.below(3);
    return cfg;
}

double supervised_suite(Rng& rng, std::size_t instances, double eps) {
    double worst = 0.0;
    for (std::size_t it = 0; it < instances; ++it) {
        const TaggerConfig cfg = random_tagger_config(rng);
        TaggerParams params = random_tagger(cfg, rng);
        const std::vector<int> ids = random_sentence(rng, cfg.vocab_size, 2, 5);
        std::vector<Tag> gold(ids.size());
        for (Tag& t : gold) t = static_cast<Tag>(rng.below(kNumLabels));

        TaggerParams analytic = TaggerParams::zeros(cfg);
        supervised_loss_and_grad(params, ids, gold, analytic);

        TaggerParams scratch = TaggerParams::zeros(cfg);
        const auto blocks = params.blocks();
        const std::vector<Tensor> numeric = finite_diff_grad(
            [&] {
                scratch.fill(0.0);
                return supervised_loss_and_grad(params, ids, gold, scratch);
            },
            std::span<Tensor* const>(blocks.data(), blocks.size()), eps);

        const auto analytic_blocks = analytic.blocks();
        for (std::size_t b = 0; b < numeric.size(); ++b)
            worst = std::max(worst, rel_error(*analytic_blocks[b], numeric[b]));
    }
    return worst;
}

double distill_suite(Rng& rng, std::size_t instances, double eps) {
    double worst = 0.0;
    for (std::size_t it = 0; it < instances; ++it) {
        const TaggerConfig cfg = random_tagger_config(rng);
        TaggerParams params = random_tagger(cfg, rng);
        const std::vector<int> ids = random_sentence(rng, cfg.vocab_size, 2, 5);

        // Teacher targets: random points strictly inside the simplex.
        std::vector<ProbDist> targets(ids.size());
        std::vector<double> logits(kNumLabels);
        for (ProbDist& d : targets) {
            for (double& l : logits) l = (2.0 * rng.uniform() - 1.0) * 2.0;
            d = softmax(logits);
        }

        TaggerParams analytic = TaggerParams::zeros(cfg);
        distill_loss_and_grad(params, ids, targets, analytic);

        TaggerParams scratch = TaggerParams::zeros(cfg);
        const auto blocks = params.blocks();
        const std::vector<Tensor> numeric = finite_diff_grad(
            [&] {
                scratch.fill(0.0);
                return distill_loss_and_grad(params, ids, targets, scratch);
            },
            std::span<Tensor* const>(blocks.data(), blocks.size()), eps);

        const auto analytic_blocks = analytic.blocks();
        for (std::size_t b = 0; b < numeric.size(); ++b)
            worst = std::max(worst, rel_error(*analytic_blocks[b], numeric[b]));
    }
    return worst;
}

double langid_suite(Rng& rng, std::size_t instances, double eps) {
    double worst = 0.0;
    for (std::size_t it = 0; it < instances; ++it) {
        const std::size_t vocab = 6 + rng.below(5);
        const std::size_t m = 4 + rng.below(4);
        const std::size_t d = 2 + rng.below(3);
        const std::size_t k = 2 + rng.below(3);

        LangIdParams params;
        params.embedding_table = Tensor::zeros({vocab, m});
        params.u = Tensor::zeros({d, m});
        params.v = Tensor::zeros({d, m});
        params.lang_embed = Tensor::zeros({m, k});
        fill_uniform(params.embedding_table, rng, 0.5);
        fill_uniform(params.u, rng, 0.5);
        fill_uniform(params.v, rng, 0.5);
        fill_uniform(params.lang_embed, rng, 0.5);

        const std::size_t n = 3 + rng.below(4);
        std::vector<std::vector<int>> sentences;
        std::vector<std::size_t> lang;
        for (std::size_t i = 0; i < n; ++i) {
            sentences.push_back(random_sentence(rng, vocab, 2, 6));
            lang.push_back(rng.below(k));
        }
        const double gamma = 0.01;
        const OrthoVariant ortho = (it % 2 == 0) ? OrthoVariant::RowGram : OrthoVariant::ColGram;

        LangIdGrads analytic{Tensor::zeros({d, m}), Tensor::zeros({d, m}),
                             Tensor::zeros({m, k})};
        langid_loss_and_grad(params, sentences, lang, gamma, ortho, analytic);

        std::array<Tensor*, 3> trainable = {&params.u, &params.v, &params.lang_embed};
        LangIdGrads scratch{Tensor::zeros({d, m}), Tensor::zeros({d, m}), Tensor::zeros({m, k})};
        const std::vector<Tensor> numeric = finite_diff_grad(
            [&] {
                scratch.u.fill(0.0);
                scratch.v.fill(0.0);
                scratch.lang_embed.fill(0.0);
                return langid_loss_and_grad(params, sentences, lang, gamma, ortho, scratch);
            },
            std::span<Tensor* const>(trainable.data(), trainable.size()), eps);

        worst = std::max(worst, rel_error(analytic.u, numeric[0]));
        worst = std::max(worst, rel_error(analytic.v, numeric[1]));
        worst = std::max(worst, rel_error(analytic.lang_embed, numeric[2]));
    }
    return worst;
}

} // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, double epsilon,
                              double tolerance) {
    GradCheckReport report;
    report.epsilon = epsilon;
    report.tolerance = tolerance;

    const struct {
        const char* name;
        double (*run)(Rng&, std::size_t, double);
        const char* tag;
    } suites[] = {
        {"supervised", supervised_suite, "gradcheck:supervised"},
        {"distill", distill_suite, "gradcheck:distill"},
        {"langid", langid_suite, "gradcheck:langid"},
    };
    for (const auto& s : suites) {
        Rng rng(mix_seed(seed, s.tag));
        GradCheckSuite out;
        out.name = s.name;
        out.instances = instances;
        out.max_rel_error = s.run(rng, instances, epsilon);
        out.passed = out.max_rel_error < tolerance;
        report.suites.push_back(std::move(out));
    }
    return report;
}

} // namespace xlner
