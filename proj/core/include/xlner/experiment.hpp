#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlner/corpus.hpp"
#include "xlner/distill.hpp"
#include "xlner/ensemble.hpp"
#include "xlner/eval.hpp"
#include "xlner/tagger.hpp"

namespace xlner {

enum class Mode { Single, Multi };
enum class Weighting { Avg, Sim };
enum class Arm { Ours, Hl, Mt };

std::string_view to_string(Mode m);
std::string_view to_string(Weighting w);
std::string_view to_string(Arm a);
std::optional<Mode> parse_mode(std::string_view s);
std::optional<Weighting> parse_weighting(std::string_view s);
std::optional<Arm> parse_arm(std::string_view s);

/// Synthetic-world parameters: one target language plus related sources at
/// configured lexical overlaps.
struct CorpusConfig {
    std::string target_language = "tgt";
    std::vector<std::string> source_languages = {"src1"};
    std::vector<double> overlaps = {0.5}; // one per source
    std::size_t train_sentences = 2000;
    std::size_t test_sentences = 500;
    SpecSizes sizes;
    std::size_t vocab_min_count = 1;
};

/// The whole experimental grid in one document. Every field has a default;
/// an empty config runs the paper-shaped single-source experiment.
struct ExperimentConfig {
    CorpusConfig corpus;
    std::size_t embedding_dim = 32;
    std::size_t context_radius = 2;
    std::size_t hidden_dim = 64;
    TrainConfig train;
    LangIdConfig langid;
    Mode mode = Mode::Single;
    Weighting weighting = Weighting::Avg;
    std::vector<Arm> arms = {Arm::Ours, Arm::Hl, Arm::Mt};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    double histogram_bin_width = 0.1;

    /// Throws config_error naming the offending field path.
    void validate() const;

    TaggerConfig tagger_config(std::size_t vocab_size) const;
};

/// Parse with full defaults; unknown keys and type mismatches raise
/// config_error with the field path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Stable digest of the resolved config, recorded in checkpoint provenance.
std::string config_digest(const ExperimentConfig& cfg);

/// Everything one seed's pipeline consumes: specs, corpora, vocabulary.
struct World {
    LanguageSpec target_spec;
    std::vector<LanguageSpec> source_specs;
    std::vector<Dataset> source_train; // labeled, one per source
    std::vector<Dataset> source_test;  // labeled
    Dataset target_train;              // unlabeled (the student's view)
    Dataset target_test;               // labeled
    Vocab vocab;
    TaggerConfig tagger;
};

World build_world(const ExperimentConfig& cfg, std::uint64_t seed);

/// The weights applied to the teacher ensemble plus how they were obtained.
struct WeightsOutcome {
    Weighting weighting = Weighting::Avg;
    WeightVector alpha;
    double tau = 0.0;
    bool degenerate = false;
    std::vector<double> similarity_min;  // per source; empty under avg
    std::vector<double> similarity_mean;
    std::vector<double> similarity_max;
};

struct ArmOutcome {
    std::string label; // "ours", "hl", "mt" ("ours-avg"/"ours-sim" in ablation)
    F1Report report;
};

/// Heavyweight per-seed artifacts kept for checkpointing.
struct SeedArtifacts {
    std::vector<TaggerParams> teachers;            // per source
    std::map<std::string, TaggerParams> students;  // per student arm label
    std::optional<LangIdParams> langid;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    WeightsOutcome weights;
    std::vector<ArmOutcome> arms;
    std::optional<CorrectionHistogram> histogram; // teacher ensemble vs soft student
    SeedArtifacts artifacts;
};

struct ExperimentOutcome {
    ExperimentConfig config;
    std::vector<SeedOutcome> seeds;
};

/// Full pipeline for one seed: world, teachers, weights, enabled arms,
/// evaluation, histogram. Deterministic in (cfg, seed).
SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// run_seed over every configured seed.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// The paper-shaped comparison grid: arms ours/hl/mt, and in multi mode the
/// ours arm under both weightings (labels "ours-avg" and "ours-sim").
ExperimentOutcome run_ablation(const ExperimentConfig& cfg);

nlohmann::json metrics_to_json(const ExperimentOutcome& outcome);
nlohmann::json weights_to_json(const ExperimentOutcome& outcome);

/// Histogram pooled over seeds (bin-wise sums), for the CSV export.
CorrectionHistogram pooled_histogram(const ExperimentOutcome& outcome, double bin_width);

/// Stage functions behind the CLI subcommands. Every stage recomputes its
/// deterministic inputs from (config, seed) and writes only its own
/// artifacts under out_dir.
void stage_gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_teacher(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_langid(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_weigh(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_student(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// Everything: metrics.json, weights.json, histogram.csv, checkpoints/.
void stage_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// Ablation grid writing the same artifact set.
void stage_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

} // namespace xlner
