#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <xlner/corpus.hpp>
#include <xlner/error.hpp>
#include <xlner/eval.hpp>
#include <xlner/rng.hpp>

using namespace xlner;
namespace fs = std::filesystem;

namespace {

// Independent span matcher used to cross-check f1_report: walk the tag
// sequence, close a span on any boundary, and compare multisets.
std::vector<Span> reference_spans(const std::vector<Tag>& tags) {
    std::vector<Span> out;
    std::size_t i = 0;
    while (i < tags.size()) {
        if (tags[i] == Tag::O) {
            ++i;
            continue;
        }
        // conlleval: both B-X and a non-continuing I-X open a span of type X.
        EntityType type = tag_entity_type(tags[i]);
        std::size_t start = i;
        ++i;
        while (i < tags.size() && is_inside(tags[i]) && tag_entity_type(tags[i]) == type) ++i;
        out.push_back({start, i - 1, type});
    }
    return out;
}

std::multiset<std::tuple<std::size_t, std::size_t, EntityType>>
span_multiset(const std::vector<Span>& spans) {
    std::multiset<std::tuple<std::size_t, std::size_t, EntityType>> out;
    for (const Span& s : spans) out.insert({s.start, s.end, s.type});
    return out;
}

std::vector<Tag> random_tags(Rng& rng, std::size_t len) {
    std::vector<Tag> tags(len);
    for (Tag& t : tags) t = static_cast<Tag>(rng.below(kNumLabels));
    return tags;
}

} // namespace

TEST_CASE("extract_spans follows the conlleval convention") {
    // A dangling I-PER opens a new span.
    std::vector<Tag> dangling{Tag::O, Tag::IPer};
    std::vector<Span> s = extract_spans(dangling);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == Span{1, 1, EntityType::Per});

    // I-LOC after B-PER does not continue the person span.
    std::vector<Tag> switched{Tag::BPer, Tag::ILoc};
    s = extract_spans(switched);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Span{0, 0, EntityType::Per});
    CHECK(s[1] == Span{1, 1, EntityType::Loc});

    // Adjacent B-X B-X are two spans; I-X continues only its own type.
    std::vector<Tag> adjacent{Tag::BOrg, Tag::BOrg, Tag::IOrg};
    s = extract_spans(adjacent);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Span{0, 0, EntityType::Org});
    CHECK(s[1] == Span{1, 2, EntityType::Org});

    // Multi-token span bounded by O.
    std::vector<Tag> classic{Tag::O, Tag::BMisc, Tag::IMisc, Tag::IMisc, Tag::O};
    s = extract_spans(classic);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == Span{1, 3, EntityType::Misc});

    std::vector<Tag> empty;
    CHECK(extract_spans(empty).empty());
}

TEST_CASE("extract_spans accepts string tags and rejects unknown ones") {
    std::vector<std::string> tags{"O", "B-PER", "I-PER", "O", "B-LOC"};
    std::vector<Span> s = extract_spans(tags);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Span{1, 2, EntityType::Per});
    CHECK(s[1] == Span{4, 4, EntityType::Loc});

    std::vector<std::string> bad{"O", "B-NOPE"};
    CHECK_THROWS_AS(extract_spans(bad), invalid_input);
}

TEST_CASE("spans_to_labels inverts extract_spans") {
    std::vector<Span> spans{{1, 2, EntityType::Per}, {4, 4, EntityType::Loc}};
    std::vector<Tag> tags = spans_to_labels(spans, 6);
    CHECK(tags == std::vector<Tag>{Tag::O, Tag::BPer, Tag::IPer, Tag::O, Tag::BLoc, Tag::O});
    CHECK(extract_spans(tags) == spans);

    std::vector<Span> out_of_range{{3, 7, EntityType::Org}};
    CHECK_THROWS_AS(spans_to_labels(out_of_range, 6), invalid_input);
}

TEST_CASE("round-trip property: spans -> labels -> spans") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t len = 1 + rng.below(15);
        // Sample a sorted set of non-overlapping spans.
        std::vector<Span> spans;
        std::size_t cursor = 0;
        while (cursor < len) {
            if (rng.uniform() < 0.4) {
                std::size_t start = cursor;
                std::size_t end = std::min(len - 1, start + rng.below(3));
                spans.push_back({start, end, static_cast<EntityType>(rng.below(4))});
                cursor = end + 2; // gap so adjacent spans cannot merge
            } else {
                ++cursor;
            }
        }
        std::vector<Tag> tags = spans_to_labels(spans, len);
        CHECK(extract_spans(tags) == spans);
    }
}

TEST_CASE("f1_report trivial cases") {
    Dataset gold;
    gold.language = "g";
    gold.labeled = true;
    gold.sentences.push_back(
        {{"a", "b", "c"}, std::vector<Tag>{Tag::BPer, Tag::IPer, Tag::O}});
    gold.sentences.push_back({{"d", "e"}, std::vector<Tag>{Tag::O, Tag::BLoc}});

    // Perfect predictions.
    std::vector<std::vector<Tag>> perfect{*gold.sentences[0].labels,
                                          *gold.sentences[1].labels};
    F1Report r = f1_report(gold, perfect);
    CHECK(r.overall.gold == 2);
    CHECK(r.overall.predicted == 2);
    CHECK(r.overall.correct == 2);
    CHECK(r.overall.f1() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.per_type[static_cast<std::size_t>(EntityType::Per)].correct == 1);
    CHECK(r.per_type[static_cast<std::size_t>(EntityType::Loc)].correct == 1);
    CHECK(r.per_type[static_cast<std::size_t>(EntityType::Org)].gold == 0);

    // All-O predictions: recall 0, precision vacuous, F1 0.
    std::vector<std::vector<Tag>> all_o{{Tag::O, Tag::O, Tag::O}, {Tag::O, Tag::O}};
    F1Report zero = f1_report(gold, all_o);
    CHECK(zero.overall.correct == 0);
    CHECK(zero.overall.predicted == 0);
    CHECK(zero.overall.f1() == 0.0);

    // Boundary error: right type, wrong extent, counts as a miss.
    std::vector<std::vector<Tag>> off{{Tag::BPer, Tag::O, Tag::O}, {Tag::O, Tag::BLoc}};
    F1Report partial = f1_report(gold, off);
    CHECK(partial.overall.correct == 1);
    CHECK(partial.overall.predicted == 2);
    CHECK(partial.overall.gold == 2);
}

TEST_CASE("f1_report validates its inputs") {
    Dataset gold;
    gold.language = "g";
    gold.labeled = true;
    gold.sentences.push_back({{"a"}, std::vector<Tag>{Tag::O}});

    std::vector<std::vector<Tag>> wrong_count;
    CHECK_THROWS_AS(f1_report(gold, wrong_count), invalid_input);

    std::vector<std::vector<Tag>> wrong_len{{Tag::O, Tag::O}};
    CHECK_THROWS_AS(f1_report(gold, wrong_len), invalid_input);

    Dataset unlabeled = gold.without_labels();
    std::vector<std::vector<Tag>> ok{{Tag::O}};
    CHECK_THROWS_AS(f1_report(unlabeled, ok), invalid_input);
}

TEST_CASE("f1_report agrees with a brute-force matcher on random pairs") {
    // 200 random (gold, predicted) tag-sequence pairs of length <= 12,
    // scored independently by multiset span intersection.
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + rng.below(12);
        std::vector<Tag> gold_tags = random_tags(rng, len);
        std::vector<Tag> pred_tags = random_tags(rng, len);

        Dataset gold;
        gold.language = "fuzz";
        gold.labeled = true;
        TaggedSentence s;
        for (std::size_t i = 0; i < len; ++i) s.tokens.push_back("w");
        s.labels = gold_tags;
        gold.sentences.push_back(std::move(s));

        std::vector<std::vector<Tag>> pred{pred_tags};
        F1Report report = f1_report(gold, pred);

        auto gset = span_multiset(reference_spans(gold_tags));
        auto pset = span_multiset(reference_spans(pred_tags));
        std::multiset<std::tuple<std::size_t, std::size_t, EntityType>> inter;
        std::set_intersection(gset.begin(), gset.end(), pset.begin(), pset.end(),
                              std::inserter(inter, inter.begin()));

        CHECK(report.overall.gold == gset.size());
        CHECK(report.overall.predicted == pset.size());
        CHECK(report.overall.correct == inter.size());
    }
}

TEST_CASE("f1_report is symmetric under sentence permutation") {
    Rng rng(7);
    Dataset gold;
    gold.language = "perm";
    gold.labeled = true;
    std::vector<std::vector<Tag>> pred;
    for (int i = 0; i < 20; ++i) {
        const std::size_t len = 1 + rng.below(10);
        TaggedSentence s;
        for (std::size_t t = 0; t < len; ++t) s.tokens.push_back("w");
        s.labels = random_tags(rng, len);
        gold.sentences.push_back(std::move(s));
        pred.push_back(random_tags(rng, len));
    }
    F1Report base = f1_report(gold, pred);

    // Reverse the sentence order on both sides.
    Dataset reversed = gold;
    std::reverse(reversed.sentences.begin(), reversed.sentences.end());
    std::vector<std::vector<Tag>> pred_rev(pred.rbegin(), pred.rend());
    F1Report rev = f1_report(reversed, pred_rev);
    CHECK(rev.overall.gold == base.overall.gold);
    CHECK(rev.overall.predicted == base.overall.predicted);
    CHECK(rev.overall.correct == base.overall.correct);
}

TEST_CASE("correction histogram buckets teacher mistakes by confidence") {
    // Tokens 1 and 3 are teacher-correct and must be ignored; token 0
    // (conf 0.15, corrected) lands in the lowest bin and token 2 (conf 0.95,
    // corrected) in the highest.
    std::vector<double> conf{0.15, 0.30, 0.95, 0.40};
    std::vector<Tag> teacher{Tag::BPer, Tag::BLoc, Tag::O, Tag::BOrg};
    std::vector<Tag> student{Tag::O, Tag::BPer, Tag::BMisc, Tag::BOrg};
    std::vector<Tag> gold{Tag::O, Tag::BLoc, Tag::BMisc, Tag::BOrg};
    CorrectionHistogram h = correction_histogram(conf, teacher, student, gold, 0.1);
    REQUIRE(h.bins() == 9); // [0.1,0.2) ... [0.9,1.0]
    CHECK(h.edges.front() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(h.edges.back() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(h.total() == 2);
    CHECK(h.count[0] == 1);
    CHECK(h.corrected[0] == 1);
    CHECK(h.count[8] == 1);
    CHECK(h.corrected[8] == 1);
    CHECK(h.fraction(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(h.fraction(1) == 0.0); // empty bin reports 0
}

TEST_CASE("correction histogram edge handling") {
    // Softmax over 9 labels cannot put less mass than 1/9 on the argmax, but
    // the flat-stream overload accepts any confidence; values below the first
    // edge clamp into bin 0 and a confidence of exactly 1.0 lands in the top
    // bin rather than falling off the [lo, hi) grid.
    std::vector<double> conf{0.05, 1.0, 0.2};
    std::vector<Tag> teacher{Tag::BPer, Tag::BPer, Tag::BPer};
    std::vector<Tag> student{Tag::O, Tag::O, Tag::O};
    std::vector<Tag> gold{Tag::O, Tag::O, Tag::O};
    CorrectionHistogram h = correction_histogram(conf, teacher, student, gold, 0.1);
    CHECK(h.total() == 3); // nothing dropped
    CHECK(h.count[0] == 1); // 0.05 clamps in
    CHECK(h.count[1] == 1); // 0.2 sits exactly on the left edge of bin 1
    CHECK(h.count[8] == 1);

    // Wider bins: width 0.2 gives [0.2,0.4) ... [0.8,1.0].
    CorrectionHistogram wide = correction_histogram(conf, teacher, student, gold, 0.2);
    REQUIRE(wide.bins() == 4);
    CHECK(wide.edges.front() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(wide.total() == 3);
}

TEST_CASE("correction histogram conservation and degenerate agreements") {
    Rng rng(88);
    const std::size_t n = 500;
    std::vector<double> conf(n);
    std::vector<Tag> teacher(n), student(n), gold(n);
    std::size_t mispredicted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        conf[i] = rng.uniform();
        teacher[i] = static_cast<Tag>(rng.below(kNumLabels));
        student[i] = static_cast<Tag>(rng.below(kNumLabels));
        gold[i] = static_cast<Tag>(rng.below(kNumLabels));
        mispredicted += teacher[i] != gold[i];
    }
    CorrectionHistogram h = correction_histogram(conf, teacher, student, gold, 0.1);
    CHECK(h.total() == mispredicted); // every misprediction lands in some bin
    for (std::size_t b = 0; b < h.bins(); ++b) {
        CHECK(h.corrected[b] <= h.count[b]);
        CHECK(h.fraction(b) >= 0.0);
        CHECK(h.fraction(b) <= 1.0);
    }

    // Student identical to teacher: nothing is ever corrected.
    CorrectionHistogram same = correction_histogram(conf, teacher, teacher, gold, 0.1);
    for (std::size_t b = 0; b < same.bins(); ++b) CHECK(same.corrected[b] == 0);

    // Student identical to gold: every misprediction is corrected.
    CorrectionHistogram perfect = correction_histogram(conf, teacher, gold, gold, 0.1);
    for (std::size_t b = 0; b < perfect.bins(); ++b)
        CHECK(perfect.corrected[b] == perfect.count[b]);
}

TEST_CASE("correction histogram validates its inputs") {
    std::vector<double> conf{0.5};
    std::vector<Tag> one{Tag::O};
    std::vector<Tag> two{Tag::O, Tag::O};
    CHECK_THROWS_AS(correction_histogram(conf, two, one, one, 0.1), invalid_input);
    CHECK_THROWS_AS(correction_histogram(conf, one, one, one, 0.0), invalid_input);
    CHECK_THROWS_AS(correction_histogram(conf, one, one, one, 1.0), invalid_input);
}

TEST_CASE("params overload of correction_histogram runs the taggers") {
    LanguageSpec spec = make_language_spec("hist", SpecSizes{15, 6, 4}, 3);
    Dataset test = generate_corpus(spec, 40, 4);
    std::vector<const Dataset*> sets{&test};
    Vocab vocab = build_vocab(sets, 1);
    TaggerConfig tcfg;
    tcfg.vocab_size = vocab.size();
    tcfg.embedding_dim = 8;
    tcfg.context_radius = 1;
    tcfg.hidden_dim = 6;
    TaggerParams teacher = init_params(tcfg, 5);
    TaggerParams student = init_params(tcfg, 6);

    CorrectionHistogram h = correction_histogram(teacher, student, test, vocab, 0.1);
    CHECK(h.bins() == 9);
    CHECK(h.total() <= test.token_count());

    // Teacher evaluated against itself has zero corrections.
    CorrectionHistogram self = correction_histogram(teacher, teacher, test, vocab, 0.1);
    for (std::size_t b = 0; b < self.bins(); ++b) CHECK(self.corrected[b] == 0);

    Dataset unlabeled = test.without_labels();
    CHECK_THROWS_AS(correction_histogram(teacher, student, unlabeled, vocab, 0.1),
                    invalid_input);
}

TEST_CASE("histogram csv round-trips through a parse") {
    std::vector<double> conf{0.15, 0.55, 0.95};
    std::vector<Tag> teacher{Tag::BPer, Tag::BLoc, Tag::BOrg};
    std::vector<Tag> student{Tag::O, Tag::O, Tag::BMisc};
    std::vector<Tag> gold{Tag::O, Tag::BLoc, Tag::O};
    CorrectionHistogram h = correction_histogram(conf, teacher, student, gold, 0.1);

    fs::path path = fs::temp_directory_path() / "xlner-eval-test" / "hist.csv";
    fs::create_directories(path.parent_path());
    write_histogram_csv(h, path);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "bin_lo,bin_hi,mispredictions,corrected,fraction");

    std::size_t rows = 0, total = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        double lo = std::stod(cells[0]);
        double hi = std::stod(cells[1]);
        CHECK(lo == doctest::Approx(h.edges[rows]).epsilon(1e-12));
        CHECK(hi == doctest::Approx(h.edges[rows + 1]).epsilon(1e-12));
        CHECK(std::stoull(cells[2]) == h.count[rows]);
        CHECK(std::stoull(cells[3]) == h.corrected[rows]);
        CHECK(std::stod(cells[4]) == doctest::Approx(h.fraction(rows)).epsilon(1e-12));
        total += h.count[rows];
        ++rows;
    }
    CHECK(rows == h.bins());
    CHECK(total == h.total());
}
