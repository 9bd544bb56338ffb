#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <xlner/checkpoint.hpp>
#include <xlner/distill.hpp>
#include <xlner/ensemble.hpp>
#include <xlner/error.hpp>
#include <xlner/eval.hpp>
#include <xlner/experiment.hpp>
#include <xlner/numerics.hpp>

#include "support/schema_check.hpp"

using namespace xlner;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "xlner-experiment-test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Single-source config small enough for per-test runs.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.corpus.train_sentences = 150;
    cfg.corpus.test_sentences = 60;
    cfg.embedding_dim = 16;
    cfg.context_radius = 1;
    cfg.hidden_dim = 16;
    cfg.train.epochs = 1;
    cfg.langid.epochs = 1;
    cfg.seeds = {1};
    return cfg;
}

ExperimentConfig tiny_multi_config() {
    ExperimentConfig cfg = tiny_config();
    cfg.corpus.source_languages = {"src1", "src2"};
    cfg.corpus.overlaps = {0.8, 0.2};
    cfg.mode = Mode::Multi;
    cfg.weighting = Weighting::Sim;
    return cfg;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::set<std::string> list_files(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            out.insert(fs::relative(entry.path(), dir).generic_string());
    return out;
}

const ArmOutcome& arm_by_label(const SeedOutcome& s, const std::string& label) {
    for (const ArmOutcome& a : s.arms)
        if (a.label == label) return a;
    REQUIRE_MESSAGE(false, "missing arm ", label);
    static ArmOutcome dummy;
    return dummy;
}

} // namespace

TEST_CASE("mode, weighting, and arm names round-trip") {
    CHECK(to_string(Mode::Single) == "single");
    CHECK(to_string(Mode::Multi) == "multi");
    CHECK(parse_mode("single") == Mode::Single);
    CHECK(parse_mode("multi") == Mode::Multi);
    CHECK_FALSE(parse_mode("both").has_value());

    CHECK(to_string(Weighting::Avg) == "avg");
    CHECK(to_string(Weighting::Sim) == "sim");
    CHECK(parse_weighting("sim") == Weighting::Sim);
    CHECK_FALSE(parse_weighting("uniform").has_value());

    CHECK(to_string(Arm::Ours) == "ours");
    CHECK(to_string(Arm::Hl) == "hl");
    CHECK(to_string(Arm::Mt) == "mt");
    CHECK(parse_arm("mt") == Arm::Mt);
    CHECK_FALSE(parse_arm("baseline").has_value());
}

TEST_CASE("default config validates; inconsistencies raise errors naming the field") {
    ExperimentConfig cfg;
    cfg.validate();

    ExperimentConfig mismatch = cfg;
    mismatch.corpus.source_languages = {"a", "b"};
    // overlaps still has one entry
    CHECK_THROWS_WITH_AS(mismatch.validate(),
                         doctest::Contains("overlaps"), config_error);

    ExperimentConfig multi_single = cfg;
    multi_single.mode = Mode::Multi;
    CHECK_THROWS_AS(multi_single.validate(), config_error);

    ExperimentConfig no_seeds = cfg;
    no_seeds.seeds.clear();
    CHECK_THROWS_WITH_AS(no_seeds.validate(), doctest::Contains("seeds"), config_error);

    ExperimentConfig bad_bin = cfg;
    bad_bin.histogram_bin_width = 1.0;
    CHECK_THROWS_WITH_AS(bad_bin.validate(),
                         doctest::Contains("histogram_bin_width"), config_error);

    ExperimentConfig bad_overlap = cfg;
    bad_overlap.corpus.overlaps = {1.5};
    CHECK_THROWS_AS(bad_overlap.validate(), config_error);

    ExperimentConfig dup_lang = cfg;
    dup_lang.corpus.source_languages = {"tgt"};
    CHECK_THROWS_AS(dup_lang.validate(), config_error);
}

TEST_CASE("config json parsing: defaults, round-trip, and rejection") {
    ExperimentConfig defaults = config_from_json(nlohmann::json::object());
    CHECK(config_digest(defaults) == config_digest(ExperimentConfig{}));

    ExperimentConfig cfg = tiny_multi_config();
    ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_digest(back) == config_digest(cfg));
    CHECK(back.mode == Mode::Multi);
    CHECK(back.corpus.overlaps == cfg.corpus.overlaps);
    CHECK(back.seeds == cfg.seeds);

    nlohmann::json unknown_top{{"corpsu", nlohmann::json::object()}};
    CHECK_THROWS_WITH_AS(config_from_json(unknown_top), doctest::Contains("corpsu"),
                         config_error);

    nlohmann::json unknown_nested{{"train", {{"epochz", 3}}}};
    CHECK_THROWS_WITH_AS(config_from_json(unknown_nested), doctest::Contains("epochz"),
                         config_error);

    nlohmann::json wrong_type{{"corpus", {{"train_sentences", "lots"}}}};
    CHECK_THROWS_WITH_AS(config_from_json(wrong_type),
                         doctest::Contains("train_sentences"), config_error);

    nlohmann::json bad_enum{{"mode", "both"}};
    CHECK_THROWS_WITH_AS(config_from_json(bad_enum), doctest::Contains("mode"), config_error);

    nlohmann::json bad_arm{{"arms", {"ours", "theirs"}}};
    CHECK_THROWS_AS(config_from_json(bad_arm), config_error);
}

TEST_CASE("load_config reports missing files and invalid json") {
    fs::path dir = fresh_dir("load-config");
    CHECK_THROWS_AS(load_config(dir / "absent.json"), config_error);

    fs::path broken = dir / "broken.json";
    {
        std::ofstream out(broken);
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_config(broken), config_error);
}

TEST_CASE("shipped configs parse and validate") {
    const fs::path root = fs::path(XLNER_SOURCE_DIR) / "configs";
    ExperimentConfig single = load_config(root / "single-pair.json");
    single.validate();
    CHECK(single.mode == Mode::Single);
    CHECK(single.corpus.source_languages.size() == 1);
    CHECK(single.seeds.size() == 5);

    ExperimentConfig multi = load_config(root / "multi-three-source.json");
    multi.validate();
    CHECK(multi.mode == Mode::Multi);
    CHECK(multi.weighting == Weighting::Sim);
    CHECK(multi.corpus.source_languages.size() == 3);
    CHECK(multi.corpus.overlaps == std::vector<double>{0.9, 0.5, 0.1});

    ExperimentConfig smoke = load_config(root / "smoke.json");
    smoke.validate();
    CHECK(smoke.seeds.size() == 1);
}

TEST_CASE("config digest is stable and sensitive") {
    ExperimentConfig cfg = tiny_config();
    std::string d1 = config_digest(cfg);
    CHECK(d1.size() == 16);
    CHECK(d1 == config_digest(cfg));

    ExperimentConfig changed = cfg;
    changed.train.epochs = 2;
    CHECK(config_digest(changed) != d1);

    ExperimentConfig reseeded = cfg;
    reseeded.seeds = {2};
    CHECK(config_digest(reseeded) != d1);
}

TEST_CASE("build_world assembles a consistent per-seed world") {
    ExperimentConfig cfg = tiny_multi_config();
    World w = build_world(cfg, 3);

    CHECK(w.target_spec.language == "tgt");
    REQUIRE(w.source_specs.size() == 2);
    CHECK(w.source_specs[0].overlap == 0.8);
    CHECK(w.source_specs[1].overlap == 0.2);

    REQUIRE(w.source_train.size() == 2);
    REQUIRE(w.source_test.size() == 2);
    for (const Dataset& d : w.source_train) {
        CHECK(d.labeled);
        CHECK(d.sentences.size() == cfg.corpus.train_sentences);
    }
    CHECK_FALSE(w.target_train.labeled); // the student never sees target labels
    CHECK(w.target_train.sentences.size() == cfg.corpus.train_sentences);
    CHECK(w.target_test.labeled);
    CHECK(w.target_test.sentences.size() == cfg.corpus.test_sentences);

    CHECK(w.vocab.id_to_token[0] == "<pad>");
    CHECK(w.vocab.id_to_token[1] == "<unk>");
    CHECK(w.tagger.vocab_size == w.vocab.size());
    CHECK(w.tagger.embedding_dim == cfg.embedding_dim);

    // Deterministic per (cfg, seed); different seed gives a different world.
    World again = build_world(cfg, 3);
    CHECK(again.target_spec == w.target_spec);
    CHECK(again.target_train == w.target_train);
    CHECK(again.source_train[1] == w.source_train[1]);
    World other = build_world(cfg, 4);
    CHECK(other.target_spec != w.target_spec);
}

TEST_CASE("run_seed produces the configured arms with sane reports") {
    ExperimentConfig cfg = tiny_config();
    SeedOutcome out = run_seed(cfg, 1);

    CHECK(out.seed == 1);
    REQUIRE(out.arms.size() == 3);
    std::set<std::string> labels;
    for (const ArmOutcome& a : out.arms) {
        labels.insert(a.label);
        double f1 = a.report.overall.f1();
        CHECK(f1 >= 0.0);
        CHECK(f1 <= 1.0);
    }
    CHECK(labels == std::set<std::string>{"ours", "hl", "mt"});

    // Single mode: uniform weights over the one teacher.
    out.weights.alpha.validate();
    REQUIRE(out.weights.alpha.size() == 1);
    CHECK(out.weights.alpha[0] == 1.0);
    CHECK(out.weights.weighting == Weighting::Avg);

    REQUIRE(out.histogram.has_value());
    CHECK(out.histogram->bins() == 9);

    REQUIRE(out.artifacts.teachers.size() == 1);
    CHECK(out.artifacts.students.count("ours") == 1);
    CHECK(out.artifacts.students.count("hl") == 1);
    CHECK(out.artifacts.students.count("mt") == 0); // mt is not a student
    CHECK_FALSE(out.artifacts.langid.has_value());  // single mode trains no langid

    // Same seed, same outcome (bitwise on parameters and counts).
    SeedOutcome again = run_seed(cfg, 1);
    CHECK(again.artifacts.teachers[0] == out.artifacts.teachers[0]);
    CHECK(again.artifacts.students.at("ours") == out.artifacts.students.at("ours"));
    CHECK(again.arms[0].report.overall.correct == out.arms[0].report.overall.correct);
}

TEST_CASE("the mt arm equals direct ensemble evaluation") {
    ExperimentConfig cfg = tiny_config();
    SeedOutcome out = run_seed(cfg, 2);
    World world = build_world(cfg, 2);

    std::vector<const TaggerParams*> teachers;
    for (const TaggerParams& t : out.artifacts.teachers) teachers.push_back(&t);

    std::vector<std::vector<Tag>> preds;
    for (const TaggedSentence& s : world.target_test.sentences) {
        std::vector<int> ids = world.vocab.encode(s);
        std::vector<ProbDist> dists =
            ensemble_dists(teachers, out.weights.alpha, ids, LabelMode::Soft);
        std::vector<Tag> labels;
        for (const ProbDist& d : dists) labels.push_back(static_cast<Tag>(argmax(d.p)));
        preds.push_back(std::move(labels));
    }
    F1Report direct = f1_report(world.target_test, preds);

    const ArmOutcome& mt = arm_by_label(out, "mt");
    CHECK(mt.report.overall.gold == direct.overall.gold);
    CHECK(mt.report.overall.predicted == direct.overall.predicted);
    CHECK(mt.report.overall.correct == direct.overall.correct);
}

TEST_CASE("multi-mode ablation runs both weightings and keeps the langid head") {
    ExperimentConfig cfg = tiny_multi_config();
    ExperimentOutcome outcome = run_ablation(cfg);
    REQUIRE(outcome.seeds.size() == 1);
    const SeedOutcome& s = outcome.seeds[0];

    std::set<std::string> labels;
    for (const ArmOutcome& a : s.arms) labels.insert(a.label);
    CHECK(labels == std::set<std::string>{"ours-avg", "ours-sim", "hl", "mt"});

    CHECK(s.weights.weighting == Weighting::Sim);
    REQUIRE(s.weights.alpha.size() == 2);
    s.weights.alpha.validate();
    CHECK(s.weights.similarity_mean.size() == 2);
    REQUIRE(s.artifacts.langid.has_value());
    s.artifacts.langid->validate();
    CHECK(s.artifacts.students.count("ours-avg") == 1);
    CHECK(s.artifacts.students.count("ours-sim") == 1);

    // Histograms pool bin-wise across seeds.
    CorrectionHistogram pooled = pooled_histogram(outcome, cfg.histogram_bin_width);
    REQUIRE(s.histogram.has_value());
    CHECK(pooled.total() == s.histogram->total());
}

TEST_CASE("metrics json validates against the shipped schema") {
    std::ifstream in(fs::path(XLNER_SOURCE_DIR) / "schemas" / "metrics.schema.json");
    REQUIRE(in.good());
    nlohmann::json schema;
    in >> schema;

    ExperimentConfig single = tiny_config();
    nlohmann::json single_metrics = metrics_to_json(run_experiment(single));
    std::vector<std::string> errors = schema_check::validate(schema, single_metrics);
    for (const std::string& e : errors) MESSAGE(e);
    CHECK(errors.empty());

    ExperimentConfig multi = tiny_multi_config();
    nlohmann::json multi_metrics = metrics_to_json(run_ablation(multi));
    errors = schema_check::validate(schema, multi_metrics);
    for (const std::string& e : errors) MESSAGE(e);
    CHECK(errors.empty());

    // A document that breaks the schema is caught (sanity-check the checker).
    nlohmann::json broken = single_metrics;
    broken.erase("mean_f1");
    CHECK_FALSE(schema_check::validate(schema, broken).empty());
    nlohmann::json extra = single_metrics;
    extra["surprise"] = 1;
    CHECK_FALSE(schema_check::validate(schema, extra).empty());
}

TEST_CASE("stage_run writes the full artifact set deterministically") {
    ExperimentConfig cfg = tiny_config();
    fs::path a = fresh_dir("run-a");
    fs::path b = fresh_dir("run-b");
    stage_run(cfg, a);
    stage_run(cfg, b);

    std::set<std::string> expected{
        "metrics.json",
        "weights.json",
        "histogram.csv",
        "checkpoints/seed1_teacher_src1.json",
        "checkpoints/seed1_student_ours.json",
        "checkpoints/seed1_student_hl.json",
    };
    CHECK(list_files(a) == expected);
    CHECK(list_files(b) == expected);
    for (const std::string& rel : expected)
        CHECK_MESSAGE(read_file(a / rel) == read_file(b / rel), rel, " differs");

    // Checkpoints carry the run provenance and reload bitwise.
    LoadedTagger teacher = load_checkpoint(a / "checkpoints/seed1_teacher_src1.json");
    CHECK(teacher.provenance.seed == 1);
    CHECK(teacher.provenance.config_digest == config_digest(cfg));

    // metrics.json content matches an in-process run.
    nlohmann::json from_disk = nlohmann::json::parse(read_file(a / "metrics.json"));
    nlohmann::json in_process = metrics_to_json(run_experiment(cfg));
    CHECK(from_disk == in_process);
}

TEST_CASE("stage_gen_corpus writes readable corpora and specs") {
    ExperimentConfig cfg = tiny_config();
    fs::path dir = fresh_dir("gen-corpus");
    stage_gen_corpus(cfg, dir);

    fs::path seed_dir = dir / "corpus" / "seed1";
    World world = build_world(cfg, 1);

    LanguageSpec tgt_spec = read_spec(seed_dir / "tgt.spec.json");
    CHECK(tgt_spec == world.target_spec);

    Dataset src_train = read_conll(seed_dir / "src1.train.conll", "src1");
    CHECK(src_train == world.source_train[0]);

    Dataset tgt_train = read_conll(seed_dir / "tgt.train.conll", "tgt");
    CHECK_FALSE(tgt_train.labeled); // exported student view stays unlabeled
    CHECK(tgt_train == world.target_train);

    Dataset tgt_test = read_conll(seed_dir / "tgt.test.conll", "tgt");
    CHECK(tgt_test.labeled);
}

TEST_CASE("stage_train_langid rejects single-source mode") {
    ExperimentConfig cfg = tiny_config();
    fs::path dir = fresh_dir("langid-single");
    CHECK_THROWS_AS(stage_train_langid(cfg, dir), config_error);
}
