#include "xlner/experiment.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xlner/checkpoint.hpp"
#include "xlner/rng.hpp"

namespace xlner {

std::string_view to_string(Mode m) { return m == Mode::Single ? "single" : "multi"; }
std::string_view to_string(Weighting w) { return w == Weighting::Avg ? "avg" : "sim"; }

std::string_view to_string(Arm a) {
    switch (a) {
    case Arm::Ours: return "ours";
    case Arm::Hl: return "hl";
    case Arm::Mt: return "mt";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
    if (s == "single") return Mode::Single;
    if (s == "multi") return Mode::Multi;
    return std::nullopt;
}

std::optional<Weighting> parse_weighting(std::string_view s) {
    if (s == "avg") return Weighting::Avg;
    if (s == "sim") return Weighting::Sim;
    return std::nullopt;
}

std::optional<Arm> parse_arm(std::string_view s) {
    if (s == "ours") return Arm::Ours;
    if (s == "hl") return Arm::Hl;
    if (s == "mt") return Arm::Mt;
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    const auto& c = corpus;
    if (c.target_language.empty()) throw config_error("config: corpus.target_language: empty");
    if (c.source_languages.empty())
        throw config_error("config: corpus.source_languages: need at least one source");
    if (c.overlaps.size() != c.source_languages.size())
        throw config_error("config: corpus.overlaps: need one entry per source language");
    for (double rho : c.overlaps)
        if (!(rho >= 0.0 && rho <= 1.0))
            throw config_error("config: corpus.overlaps: values must lie in [0, 1]");
    std::vector<std::string> names = c.source_languages;
    names.push_back(c.target_language);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw config_error("config: corpus: language ids must be distinct");
    if (c.train_sentences == 0 || c.test_sentences == 0)
        throw config_error("config: corpus: sentence counts must be positive");
    if (c.sizes.function_words == 0 || c.sizes.names_per_type == 0 || c.sizes.templates == 0)
        throw config_error("config: corpus: lexicon and template sizes must be positive");

    if (mode == Mode::Single && c.source_languages.size() != 1)
        throw config_error("config: mode: single-source mode needs exactly one source language");
    if (mode == Mode::Multi && c.source_languages.size() < 2)
        throw config_error("config: mode: multi-source mode needs at least two sources");

    if (embedding_dim == 0 || hidden_dim == 0)
        throw config_error("config: tagger: dimensions must be positive");
    if (train.batch_size == 0) throw config_error("config: train.batch_size: must be positive");
    if (train.epochs == 0) throw config_error("config: train.epochs: must be at least 1");
    if (!(train.teacher_lr > 0.0))
        throw config_error("config: train.teacher_lr: must be positive");
    if (!(train.student_lr > 0.0))
        throw config_error("config: train.student_lr: must be positive");
    if (!(train.word_dropout >= 0.0 && train.word_dropout < 1.0))
        throw config_error("config: train.word_dropout: must lie in [0, 1)");
    if (langid.rank == 0) throw config_error("config: langid.rank: must be positive");
    if (!(langid.gamma >= 0.0))
        throw config_error("config: langid.gamma: must be non-negative");
    if (langid.epochs == 0) throw config_error("config: langid.epochs: must be at least 1");
    if (langid.batch_size == 0)
        throw config_error("config: langid.batch_size: must be positive");
    if (!(langid.learning_rate > 0.0))
        throw config_error("config: langid.learning_rate: must be positive");
    if (langid.temperature == TemperatureMode::Fixed && !(langid.fixed_tau > 0.0))
        throw config_error("config: langid.fixed_tau: must be positive");
    if (arms.empty()) throw config_error("config: arms: need at least one arm");
    std::vector<Arm> sorted_arms = arms;
    std::sort(sorted_arms.begin(), sorted_arms.end());
    if (std::adjacent_find(sorted_arms.begin(), sorted_arms.end()) != sorted_arms.end())
        throw config_error("config: arms: duplicate arm");
    if (seeds.empty()) throw config_error("config: seeds: need at least one seed");
    if (!(histogram_bin_width > 0.0 && histogram_bin_width < 1.0))
        throw config_error("config: histogram_bin_width: must lie in (0, 1)");
}

TaggerConfig ExperimentConfig::tagger_config(std::size_t vocab_size) const {
    TaggerConfig t;
    t.vocab_size = vocab_size;
    t.embedding_dim = embedding_dim;
    t.context_radius = context_radius;
    t.hidden_dim = hidden_dim;
    return t;
}

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw config_error("config: " + path + ": " + why);
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
}

void expect_keys(const json& j, const std::string& prefix,
                 std::initializer_list<std::string_view> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (std::string_view k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(prefix.empty() ? it.key() : prefix + "." + it.key(), "unknown field");
    }
}

std::string join(const std::string& prefix, const char* key) {
    return prefix.empty() ? key : prefix + "." + key;
}

std::size_t get_size(const json& j, const std::string& prefix, const char* key,
                     std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail(join(prefix, key), "expected a non-negative integer");
    if (v.is_number_integer() && v.get<long long>() < 0)
        fail(join(prefix, key), "expected a non-negative integer");
    return v.get<std::size_t>();
}

double get_double(const json& j, const std::string& prefix, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) fail(join(prefix, key), "expected a number");
    return v.get<double>();
}

bool get_bool(const json& j, const std::string& prefix, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(join(prefix, key), "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& j, const std::string& prefix, const char* key,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) fail(join(prefix, key), "expected a string");
    return v.get<std::string>();
}

CorpusConfig corpus_from_json(const json& j) {
    CorpusConfig c;
    expect_object(j, "corpus");
    expect_keys(j, "corpus",
                {"target_language", "source_languages", "overlaps", "train_sentences",
                 "test_sentences", "function_words", "names_per_type", "templates",
                 "vocab_min_count"});
    c.target_language = get_string(j, "corpus", "target_language", c.target_language);
    if (j.contains("source_languages")) {
        const json& v = j.at("source_languages");
        if (!v.is_array()) fail("corpus.source_languages", "expected an array of strings");
        c.source_languages.clear();
        for (const json& e : v) {
            if (!e.is_string()) fail("corpus.source_languages", "expected an array of strings");
            c.source_languages.push_back(e.get<std::string>());
        }
    }
    if (j.contains("overlaps")) {
        const json& v = j.at("overlaps");
        if (!v.is_array()) fail("corpus.overlaps", "expected an array of numbers");
        c.overlaps.clear();
        for (const json& e : v) {
            if (!e.is_number()) fail("corpus.overlaps", "expected an array of numbers");
            c.overlaps.push_back(e.get<double>());
        }
    } else if (j.contains("source_languages")) {
        c.overlaps.assign(c.source_languages.size(), 0.5);
    }
    c.train_sentences = get_size(j, "corpus", "train_sentences", c.train_sentences);
    c.test_sentences = get_size(j, "corpus", "test_sentences", c.test_sentences);
    c.sizes.function_words = get_size(j, "corpus", "function_words", c.sizes.function_words);
    c.sizes.names_per_type = get_size(j, "corpus", "names_per_type", c.sizes.names_per_type);
    c.sizes.templates = get_size(j, "corpus", "templates", c.sizes.templates);
    c.vocab_min_count = get_size(j, "corpus", "vocab_min_count", c.vocab_min_count);
    return c;
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    expect_object(j, "train");
    expect_keys(j, "train",
                {"batch_size", "epochs", "teacher_lr", "student_lr", "beta1", "beta2", "epsilon",
                 "weight_decay", "word_dropout", "init_student_from_teacher"});
    t.batch_size = get_size(j, "train", "batch_size", t.batch_size);
    t.epochs = get_size(j, "train", "epochs", t.epochs);
    t.teacher_lr = get_double(j, "train", "teacher_lr", t.teacher_lr);
    t.student_lr = get_double(j, "train", "student_lr", t.student_lr);
    t.beta1 = get_double(j, "train", "beta1", t.beta1);
    t.beta2 = get_double(j, "train", "beta2", t.beta2);
    t.epsilon = get_double(j, "train", "epsilon", t.epsilon);
    t.weight_decay = get_double(j, "train", "weight_decay", t.weight_decay);
    t.word_dropout = get_double(j, "train", "word_dropout", t.word_dropout);
    t.init_student_from_teacher =
        get_bool(j, "train", "init_student_from_teacher", t.init_student_from_teacher);
    return t;
}

LangIdConfig langid_from_json(const json& j) {
    LangIdConfig l;
    expect_object(j, "langid");
    expect_keys(j, "langid",
                {"rank", "gamma", "ortho", "temperature", "fixed_tau", "epochs", "batch_size",
                 "learning_rate"});
    l.rank = get_size(j, "langid", "rank", l.rank);
    l.gamma = get_double(j, "langid", "gamma", l.gamma);
    const std::string ortho = get_string(j, "langid", "ortho", "row");
    if (ortho == "row")
        l.ortho = OrthoVariant::RowGram;
    else if (ortho == "col")
        l.ortho = OrthoVariant::ColGram;
    else
        fail("langid.ortho", "expected \"row\" or \"col\"");
    const std::string temp = get_string(j, "langid", "temperature", "variance");
    if (temp == "variance")
        l.temperature = TemperatureMode::Variance;
    else if (temp == "fixed")
        l.temperature = TemperatureMode::Fixed;
    else
        fail("langid.temperature", "expected \"variance\" or \"fixed\"");
    l.fixed_tau = get_double(j, "langid", "fixed_tau", l.fixed_tau);
    l.epochs = get_size(j, "langid", "epochs", l.epochs);
    l.batch_size = get_size(j, "langid", "batch_size", l.batch_size);
    l.learning_rate = get_double(j, "langid", "learning_rate", l.learning_rate);
    return l;
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed for " + path.string());
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    expect_object(j, "");
    expect_keys(j, "",
                {"corpus", "tagger", "train", "langid", "mode", "weighting", "arms", "seeds",
                 "histogram_bin_width"});
    if (j.contains("corpus")) cfg.corpus = corpus_from_json(j.at("corpus"));
    if (j.contains("tagger")) {
        const json& t = j.at("tagger");
        expect_object(t, "tagger");
        expect_keys(t, "tagger", {"embedding_dim", "context_radius", "hidden_dim"});
        cfg.embedding_dim = get_size(t, "tagger", "embedding_dim", cfg.embedding_dim);
        cfg.context_radius = get_size(t, "tagger", "context_radius", cfg.context_radius);
        cfg.hidden_dim = get_size(t, "tagger", "hidden_dim", cfg.hidden_dim);
    }
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("langid")) cfg.langid = langid_from_json(j.at("langid"));
    if (j.contains("mode")) {
        auto m = parse_mode(get_string(j, "", "mode", "single"));
        if (!m) fail("mode", "expected \"single\" or \"multi\"");
        cfg.mode = *m;
    }
    if (j.contains("weighting")) {
        auto w = parse_weighting(get_string(j, "", "weighting", "avg"));
        if (!w) fail("weighting", "expected \"avg\" or \"sim\"");
        cfg.weighting = *w;
    }
    if (j.contains("arms")) {
        const json& v = j.at("arms");
        if (!v.is_array()) fail("arms", "expected an array of arm names");
        cfg.arms.clear();
        for (const json& e : v) {
            if (!e.is_string()) fail("arms", "expected an array of arm names");
            auto a = parse_arm(e.get<std::string>());
            if (!a) fail("arms", "unknown arm \"" + e.get<std::string>() + "\"");
            cfg.arms.push_back(*a);
        }
    }
    if (j.contains("seeds")) {
        const json& v = j.at("seeds");
        if (!v.is_array()) fail("seeds", "expected an array of integers");
        cfg.seeds.clear();
        for (const json& e : v) {
            if (!e.is_number_integer() && !e.is_number_unsigned())
                fail("seeds", "expected an array of integers");
            if (e.is_number_integer() && e.get<long long>() < 0)
                fail("seeds", "seeds must be non-negative");
            cfg.seeds.push_back(e.get<std::uint64_t>());
        }
    }
    cfg.histogram_bin_width =
        get_double(j, "", "histogram_bin_width", cfg.histogram_bin_width);
    cfg.validate();
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    json arms = json::array();
    for (Arm a : cfg.arms) arms.push_back(std::string(to_string(a)));
    return json{
        {"corpus",
         {{"target_language", cfg.corpus.target_language},
          {"source_languages", cfg.corpus.source_languages},
          {"overlaps", cfg.corpus.overlaps},
          {"train_sentences", cfg.corpus.train_sentences},
          {"test_sentences", cfg.corpus.test_sentences},
          {"function_words", cfg.corpus.sizes.function_words},
          {"names_per_type", cfg.corpus.sizes.names_per_type},
          {"templates", cfg.corpus.sizes.templates},
          {"vocab_min_count", cfg.corpus.vocab_min_count}}},
        {"tagger",
         {{"embedding_dim", cfg.embedding_dim},
          {"context_radius", cfg.context_radius},
          {"hidden_dim", cfg.hidden_dim}}},
        {"train",
         {{"batch_size", cfg.train.batch_size},
          {"epochs", cfg.train.epochs},
          {"teacher_lr", cfg.train.teacher_lr},
          {"student_lr", cfg.train.student_lr},
          {"beta1", cfg.train.beta1},
          {"beta2", cfg.train.beta2},
          {"epsilon", cfg.train.epsilon},
          {"weight_decay", cfg.train.weight_decay},
          {"word_dropout", cfg.train.word_dropout},
          {"init_student_from_teacher", cfg.train.init_student_from_teacher}}},
        {"langid",
         {{"rank", cfg.langid.rank},
          {"gamma", cfg.langid.gamma},
          {"ortho", cfg.langid.ortho == OrthoVariant::RowGram ? "row" : "col"},
          {"temperature",
           cfg.langid.temperature == TemperatureMode::Variance ? "variance" : "fixed"},
          {"fixed_tau", cfg.langid.fixed_tau},
          {"epochs", cfg.langid.epochs},
          {"batch_size", cfg.langid.batch_size},
          {"learning_rate", cfg.langid.learning_rate}}},
        {"mode", std::string(to_string(cfg.mode))},
        {"weighting", std::string(to_string(cfg.weighting))},
        {"arms", std::move(arms)},
        {"seeds", cfg.seeds},
        {"histogram_bin_width", cfg.histogram_bin_width}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config: " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_digest(const ExperimentConfig& cfg) {
    return hex64(fnv1a(config_to_json(cfg).dump()));
}

World build_world(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    World w;
    const auto& c = cfg.corpus;
    w.target_spec =
        make_language_spec(c.target_language, c.sizes, mix_seed(seed, "spec:" + c.target_language));
    for (std::size_t k = 0; k < c.source_languages.size(); ++k) {
        const std::string& lang = c.source_languages[k];
        w.source_specs.push_back(derive_language_spec(w.target_spec, lang, c.overlaps[k],
                                                      mix_seed(seed, "spec:" + lang)));
        w.source_train.push_back(generate_corpus(w.source_specs.back(), c.train_sentences,
                                                 mix_seed(seed, "corpus:train:" + lang)));
        w.source_test.push_back(generate_corpus(w.source_specs.back(), c.test_sentences,
                                                mix_seed(seed, "corpus:test:" + lang)));
    }
    w.target_train = generate_corpus(w.target_spec, c.train_sentences,
                                     mix_seed(seed, "corpus:train:" + c.target_language))
                         .without_labels();
    w.target_test = generate_corpus(w.target_spec, c.test_sentences,
                                    mix_seed(seed, "corpus:test:" + c.target_language));

    std::vector<const Dataset*> train_side;
    for (const Dataset& d : w.source_train) train_side.push_back(&d);
    train_side.push_back(&w.target_train);
    w.vocab = build_vocab(train_side, c.vocab_min_count);
    w.tagger = cfg.tagger_config(w.vocab.size());
    return w;
}

namespace {

std::vector<TaggerParams> train_all_teachers(const ExperimentConfig& cfg, const World& world,
                                             std::uint64_t seed) {
    std::vector<TaggerParams> teachers;
    teachers.reserve(world.source_train.size());
    for (std::size_t k = 0; k < world.source_train.size(); ++k) {
        TrainConfig tc = cfg.train;
        tc.seed = mix_seed(seed, "teacher:" + cfg.corpus.source_languages[k]);
        teachers.push_back(train_teacher(world.source_train[k], world.vocab, world.tagger, tc));
        // Applied cross-lingually, a teacher meets ids outside its training
        // support; route those through its trained unknown-word response.
        std::vector<bool> seen(world.vocab.size(), false);
        for (const TaggedSentence& s : world.source_train[k].sentences)
            for (int id : world.vocab.encode(s)) seen[static_cast<std::size_t>(id)] = true;
        collapse_unseen_rows(teachers.back(), seen);
    }
    return teachers;
}

std::vector<const TaggerParams*> pointers(const std::vector<TaggerParams>& v) {
    std::vector<const TaggerParams*> p;
    p.reserve(v.size());
    for (const TaggerParams& t : v) p.push_back(&t);
    return p;
}

WeightsOutcome avg_weights_outcome(std::size_t k) {
    WeightsOutcome w;
    w.weighting = Weighting::Avg;
    w.alpha = uniform_weights(k);
    return w;
}

WeightsOutcome sim_weights_outcome(const ExperimentConfig& cfg, const World& world,
                                   const std::vector<TaggerParams>& teachers, std::uint64_t seed,
                                   std::optional<LangIdParams>& langid_out) {
    const Tensor shared = make_shared_embedding(pointers(teachers));
    LangIdConfig lc = cfg.langid;
    lc.seed = mix_seed(seed, "langid");
    std::vector<const Dataset*> sources;
    for (const Dataset& d : world.source_train) sources.push_back(&d);
    LangIdParams params = train_langid(sources, world.vocab, shared, lc);

    std::vector<std::vector<int>> target;
    target.reserve(world.target_train.sentences.size());
    for (const TaggedSentence& s : world.target_train.sentences)
        target.push_back(world.vocab.encode(s));
    const SimilarityReport rep =
        similarity_weights(params, target, lc.temperature, lc.fixed_tau);

    WeightsOutcome w;
    w.weighting = Weighting::Sim;
    w.alpha = rep.weights;
    w.tau = rep.tau;
    w.degenerate = rep.degenerate;
    w.similarity_min = rep.similarity_min;
    w.similarity_mean = rep.similarity_mean;
    w.similarity_max = rep.similarity_max;
    langid_out = std::move(params);
    return w;
}

F1Report eval_tagger(const TaggerParams& params, const Dataset& test, const Vocab& vocab) {
    std::vector<std::vector<Tag>> preds;
    preds.reserve(test.sentences.size());
    for (const TaggedSentence& s : test.sentences)
        preds.push_back(predict_labels(params, vocab.encode(s)));
    return f1_report(test, preds);
}

F1Report eval_ensemble(std::span<const TaggerParams* const> teachers, const WeightVector& alpha,
                       const Dataset& test, const Vocab& vocab) {
    std::vector<std::vector<Tag>> preds;
    preds.reserve(test.sentences.size());
    for (const TaggedSentence& s : test.sentences) {
        const std::vector<int> ids = vocab.encode(s);
        const std::vector<ProbDist> dists =
            ensemble_dists(teachers, alpha, ids, LabelMode::Soft);
        std::vector<Tag> labels;
        labels.reserve(ids.size());
        for (const ProbDist& d : dists) labels.push_back(static_cast<Tag>(argmax(d.p)));
        preds.push_back(std::move(labels));
    }
    return f1_report(test, preds);
}

CorrectionHistogram ensemble_histogram(std::span<const TaggerParams* const> teachers,
                                       const WeightVector& alpha, const TaggerParams& student,
                                       const Dataset& test, const Vocab& vocab,
                                       double bin_width) {
    std::vector<double> confidence;
    std::vector<Tag> teacher_labels, student_labels, gold;
    for (const TaggedSentence& s : test.sentences) {
        const std::vector<int> ids = vocab.encode(s);
        const std::vector<ProbDist> dists =
            ensemble_dists(teachers, alpha, ids, LabelMode::Soft);
        const std::vector<Tag> student_pred = predict_labels(student, ids);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t best = argmax(dists[i].p);
            confidence.push_back(dists[i][best]);
            teacher_labels.push_back(static_cast<Tag>(best));
            student_labels.push_back(student_pred[i]);
            gold.push_back((*s.labels)[i]);
        }
    }
    return correction_histogram(confidence, teacher_labels, student_labels, gold, bin_width);
}

/// One student arm: train under the given mode/weights, evaluate, record.
void run_student_arm(const ExperimentConfig& cfg, const World& world,
                     const std::vector<TaggerParams>& teachers, const WeightVector& alpha,
                     LabelMode mode, const std::string& label, std::uint64_t seed,
                     SeedOutcome& out) {
    TrainConfig sc = cfg.train;
    sc.label_mode = mode;
    // One stream for every arm: paired initialisation and batch order, so arm
    // comparisons reflect the labels the students were fed, not draw luck.
    sc.seed = mix_seed(seed, "student");
    TaggerParams student = train_student(pointers(teachers), alpha, world.target_train,
                                         world.vocab, world.tagger, sc);
    out.arms.push_back(ArmOutcome{label, eval_tagger(student, world.target_test, world.vocab)});
    out.artifacts.students.emplace(label, std::move(student));
}

SeedOutcome run_seed_impl(const ExperimentConfig& cfg, std::uint64_t seed, bool ablation) {
    const World world = build_world(cfg, seed);
    SeedOutcome out;
    out.seed = seed;
    out.artifacts.teachers = train_all_teachers(cfg, world, seed);
    const std::vector<TaggerParams>& teachers = out.artifacts.teachers;
    const std::size_t k = teachers.size();

    const bool multi = cfg.mode == Mode::Multi;
    WeightsOutcome avg = avg_weights_outcome(k);
    std::optional<WeightsOutcome> sim;
    if (multi && (ablation || cfg.weighting == Weighting::Sim))
        sim = sim_weights_outcome(cfg, world, teachers, seed, out.artifacts.langid);

    // Weights applied to hl/mt and (outside ablation) to ours.
    const WeightsOutcome& applied =
        (multi && cfg.weighting == Weighting::Sim) ? *sim : avg;
    out.weights = sim ? *sim : applied;

    const bool want_ours = std::find(cfg.arms.begin(), cfg.arms.end(), Arm::Ours) != cfg.arms.end();
    const bool want_hl = std::find(cfg.arms.begin(), cfg.arms.end(), Arm::Hl) != cfg.arms.end();
    const bool want_mt = std::find(cfg.arms.begin(), cfg.arms.end(), Arm::Mt) != cfg.arms.end();

    std::string histogram_arm;
    if (want_ours) {
        if (ablation && multi) {
            run_student_arm(cfg, world, teachers, avg.alpha, LabelMode::Soft, "ours-avg", seed,
                            out);
            run_student_arm(cfg, world, teachers, sim->alpha, LabelMode::Soft, "ours-sim", seed,
                            out);
            histogram_arm = "ours-sim";
        } else {
            run_student_arm(cfg, world, teachers, applied.alpha, LabelMode::Soft, "ours", seed,
                            out);
            histogram_arm = "ours";
        }
    }
    if (want_hl) {
        run_student_arm(cfg, world, teachers, applied.alpha, LabelMode::Hard, "hl", seed, out);
        if (histogram_arm.empty()) histogram_arm = "hl";
    }
    if (want_mt)
        out.arms.push_back(ArmOutcome{
            "mt", eval_ensemble(pointers(teachers), applied.alpha, world.target_test,
                                world.vocab)});

    if (!histogram_arm.empty()) {
        const WeightVector& halpha =
            (histogram_arm == "ours-sim") ? sim->alpha : applied.alpha;
        out.histogram = ensemble_histogram(pointers(teachers), halpha,
                                           out.artifacts.students.at(histogram_arm),
                                           world.target_test, world.vocab,
                                           cfg.histogram_bin_width);
    }
    return out;
}

} // namespace

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    return run_seed_impl(cfg, seed, false);
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentOutcome out;
    out.config = cfg;
    for (std::uint64_t seed : cfg.seeds) out.seeds.push_back(run_seed_impl(cfg, seed, false));
    return out;
}

ExperimentOutcome run_ablation(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentOutcome out;
    out.config = cfg;
    for (std::uint64_t seed : cfg.seeds) out.seeds.push_back(run_seed_impl(cfg, seed, true));
    return out;
}

namespace {

json weights_entry(const SeedOutcome& s) {
    json w{{"weighting", std::string(to_string(s.weights.weighting))},
           {"alpha", s.weights.alpha.alpha},
           {"tau", s.weights.tau},
           {"degenerate", s.weights.degenerate}};
    if (!s.weights.similarity_mean.empty())
        w["similarity"] = json{{"min", s.weights.similarity_min},
                               {"mean", s.weights.similarity_mean},
                               {"max", s.weights.similarity_max}};
    return w;
}

} // namespace

nlohmann::json metrics_to_json(const ExperimentOutcome& outcome) {
    json seeds = json::array();
    std::map<std::string, std::pair<double, std::size_t>> mean_acc;
    for (const SeedOutcome& s : outcome.seeds) {
        json arms;
        for (const ArmOutcome& a : s.arms) {
            arms[a.label] = f1_to_json(a.report);
            auto& acc = mean_acc[a.label];
            acc.first += a.report.overall.f1();
            acc.second += 1;
        }
        json entry{{"seed", s.seed}, {"weights", weights_entry(s)}, {"arms", std::move(arms)}};
        if (s.histogram) entry["histogram"] = histogram_to_json(*s.histogram);
        seeds.push_back(std::move(entry));
    }
    json mean_f1;
    for (const auto& [label, acc] : mean_acc)
        mean_f1[label] = acc.first / static_cast<double>(acc.second);
    return json{{"schema_version", 1},
                {"mode", std::string(to_string(outcome.config.mode))},
                {"weighting", std::string(to_string(outcome.config.weighting))},
                {"target_language", outcome.config.corpus.target_language},
                {"source_languages", outcome.config.corpus.source_languages},
                {"config", config_to_json(outcome.config)},
                {"seeds", std::move(seeds)},
                {"mean_f1", std::move(mean_f1)}};
}

nlohmann::json weights_to_json(const ExperimentOutcome& outcome) {
    json seeds = json::array();
    for (const SeedOutcome& s : outcome.seeds) {
        json e = weights_entry(s);
        e["seed"] = s.seed;
        seeds.push_back(std::move(e));
    }
    return json{{"schema_version", 1},
                {"source_languages", outcome.config.corpus.source_languages},
                {"seeds", std::move(seeds)}};
}

CorrectionHistogram pooled_histogram(const ExperimentOutcome& outcome, double bin_width) {
    CorrectionHistogram pooled;
    bool first = true;
    for (const SeedOutcome& s : outcome.seeds) {
        if (!s.histogram) continue;
        if (first) {
            pooled = *s.histogram;
            first = false;
            continue;
        }
        for (std::size_t b = 0; b < pooled.bins(); ++b) {
            pooled.count[b] += s.histogram->count[b];
            pooled.corrected[b] += s.histogram->corrected[b];
        }
    }
    if (first) {
        // No student arms ran; emit an empty histogram of the right shape.
        pooled = correction_histogram(std::span<const double>{}, std::span<const Tag>{},
                                      std::span<const Tag>{}, std::span<const Tag>{}, bin_width);
    }
    return pooled;
}

namespace {

std::filesystem::path checkpoint_dir(const std::filesystem::path& out_dir) {
    const std::filesystem::path dir = out_dir / "checkpoints";
    std::filesystem::create_directories(dir);
    return dir;
}

void save_seed_checkpoints(const ExperimentConfig& cfg, const SeedOutcome& s,
                           const std::filesystem::path& out_dir) {
    const std::filesystem::path dir = checkpoint_dir(out_dir);
    const Provenance prov{s.seed, config_digest(cfg)};
    const std::string prefix = "seed" + std::to_string(s.seed) + "_";
    for (std::size_t k = 0; k < s.artifacts.teachers.size(); ++k)
        save_checkpoint(s.artifacts.teachers[k], prov,
                        dir / (prefix + "teacher_" + cfg.corpus.source_languages[k] + ".json"));
    for (const auto& [label, params] : s.artifacts.students)
        save_checkpoint(params, prov, dir / (prefix + "student_" + label + ".json"));
    if (s.artifacts.langid)
        save_langid_checkpoint(*s.artifacts.langid, prov, dir / (prefix + "langid.json"));
}

void write_outcome(const ExperimentOutcome& outcome, const std::filesystem::path& out_dir,
                   bool with_checkpoints) {
    std::filesystem::create_directories(out_dir);
    write_json_file(metrics_to_json(outcome), out_dir / "metrics.json");
    write_json_file(weights_to_json(outcome), out_dir / "weights.json");
    write_histogram_csv(pooled_histogram(outcome, outcome.config.histogram_bin_width),
                        out_dir / "histogram.csv");
    if (with_checkpoints)
        for (const SeedOutcome& s : outcome.seeds)
            save_seed_checkpoints(outcome.config, s, out_dir);
}

} // namespace

void stage_gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    for (std::uint64_t seed : cfg.seeds) {
        const World world = build_world(cfg, seed);
        const std::filesystem::path dir = out_dir / "corpus" / ("seed" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        write_spec(world.target_spec, dir / (world.target_spec.language + ".spec.json"));
        for (const LanguageSpec& spec : world.source_specs)
            write_spec(spec, dir / (spec.language + ".spec.json"));
        for (std::size_t k = 0; k < world.source_train.size(); ++k) {
            const std::string& lang = cfg.corpus.source_languages[k];
            write_conll(world.source_train[k], dir / (lang + ".train.conll"));
            write_conll(world.source_test[k], dir / (lang + ".test.conll"));
        }
        write_conll(world.target_train, dir / (cfg.corpus.target_language + ".train.conll"));
        write_conll(world.target_test, dir / (cfg.corpus.target_language + ".test.conll"));
    }
}

void stage_train_teacher(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    for (std::uint64_t seed : cfg.seeds) {
        const World world = build_world(cfg, seed);
        const std::vector<TaggerParams> teachers = train_all_teachers(cfg, world, seed);
        const std::filesystem::path dir = checkpoint_dir(out_dir);
        const Provenance prov{seed, config_digest(cfg)};
        for (std::size_t k = 0; k < teachers.size(); ++k)
            save_checkpoint(teachers[k], prov,
                            dir / ("seed" + std::to_string(seed) + "_teacher_" +
                                   cfg.corpus.source_languages[k] + ".json"));
    }
}

void stage_train_langid(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    if (cfg.mode != Mode::Multi)
        throw config_error("config: mode: the langid stage needs multi-source mode");
    for (std::uint64_t seed : cfg.seeds) {
        const World world = build_world(cfg, seed);
        const std::vector<TaggerParams> teachers = train_all_teachers(cfg, world, seed);
        std::optional<LangIdParams> langid;
        sim_weights_outcome(cfg, world, teachers, seed, langid);
        save_langid_checkpoint(*langid, Provenance{seed, config_digest(cfg)},
                               checkpoint_dir(out_dir) /
                                   ("seed" + std::to_string(seed) + "_langid.json"));
    }
}

void stage_weigh(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    ExperimentOutcome outcome;
    outcome.config = cfg;
    for (std::uint64_t seed : cfg.seeds) {
        SeedOutcome s;
        s.seed = seed;
        if (cfg.mode == Mode::Multi && cfg.weighting == Weighting::Sim) {
            const World world = build_world(cfg, seed);
            const std::vector<TaggerParams> teachers = train_all_teachers(cfg, world, seed);
            std::optional<LangIdParams> langid;
            s.weights = sim_weights_outcome(cfg, world, teachers, seed, langid);
        } else {
            s.weights = avg_weights_outcome(cfg.corpus.source_languages.size());
        }
        outcome.seeds.push_back(std::move(s));
    }
    std::filesystem::create_directories(out_dir);
    write_json_file(weights_to_json(outcome), out_dir / "weights.json");
}

void stage_train_student(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    for (std::uint64_t seed : cfg.seeds) {
        const SeedOutcome s = run_seed_impl(cfg, seed, false);
        const std::filesystem::path dir = checkpoint_dir(out_dir);
        const Provenance prov{seed, config_digest(cfg)};
        for (const auto& [label, params] : s.artifacts.students)
            save_checkpoint(params, prov,
                            dir / ("seed" + std::to_string(seed) + "_student_" + label +
                                   ".json"));
    }
}

void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    const ExperimentOutcome outcome = run_experiment(cfg);
    std::filesystem::create_directories(out_dir);
    write_json_file(metrics_to_json(outcome), out_dir / "metrics.json");
    write_histogram_csv(pooled_histogram(outcome, cfg.histogram_bin_width),
                        out_dir / "histogram.csv");
}

void stage_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    write_outcome(run_experiment(cfg), out_dir, true);
}

void stage_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    write_outcome(run_ablation(cfg), out_dir, true);
}

} // namespace xlner
