// Command-line front end: one subcommand per pipeline stage plus the
// finite-difference gradient gate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
// data error, 3 gradient check failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xlner/error.hpp"
#include "xlner/experiment.hpp"
#include "xlner/gradcheck.hpp"

namespace {

struct Args {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::string arm;
    std::string mode;
    std::string weighting;
};

using Stage = void (*)(const xlner::ExperimentConfig&, const std::filesystem::path&);

/// Attach the shared pipeline flags to a stage subcommand.
void add_pipeline_options(CLI::App* cmd, Args& args) {
    cmd->add_option("--config", args.config_path, "Experiment config (JSON); defaults apply");
    cmd->add_option("--seed", args.seed, "Run a single seed instead of the configured list");
    cmd->add_option("--out", args.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--arm", args.arm, "Restrict to one arm")
        ->check(CLI::IsMember({"ours", "hl", "mt"}));
    cmd->add_option("--mode", args.mode, "Override teacher mode")
        ->check(CLI::IsMember({"single", "multi"}));
    cmd->add_option("--weighting", args.weighting, "Override ensemble weighting")
        ->check(CLI::IsMember({"avg", "sim"}));
}

xlner::ExperimentConfig resolve_config(const Args& args) {
    xlner::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = xlner::load_config(args.config_path);
    if (args.seed) cfg.seeds = {*args.seed};
    if (!args.mode.empty()) cfg.mode = *xlner::parse_mode(args.mode);
    if (!args.weighting.empty()) cfg.weighting = *xlner::parse_weighting(args.weighting);
    if (!args.arm.empty()) cfg.arms = {*xlner::parse_arm(args.arm)};
    return cfg;
}

int run_stage(Stage stage, const Args& args) {
    try {
        stage(resolve_config(args), args.out_dir);
        return 0;
    } catch (const xlner::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const xlner::error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

int run_gradcheck_command(std::uint64_t seed) {
    const xlner::GradCheckReport report = xlner::run_gradcheck(seed);
    for (const xlner::GradCheckSuite& s : report.suites)
        std::printf("gradcheck %-10s  instances %zu  max_rel_error %.3e  %s\n", s.name.c_str(),
                    s.instances, s.max_rel_error, s.passed ? "ok" : "FAIL");
    if (!report.all_passed()) {
        std::fprintf(stderr, "gradcheck: tolerance %.1e exceeded\n", report.tolerance);
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-lingual NER distillation laboratory"};
    app.require_subcommand(1);

    Args args;
    Stage stage = nullptr;
    std::uint64_t gradcheck_seed = 42;
    bool gradcheck_requested = false;

    const struct {
        const char* name;
        const char* help;
        Stage fn;
    } stages[] = {
        {"gen-corpus", "Generate the synthetic corpora", xlner::stage_gen_corpus},
        {"train-teacher", "Train the source-language teachers", xlner::stage_train_teacher},
        {"train-langid", "Train the language-ID head", xlner::stage_train_langid},
        {"weigh", "Compute the teacher weights", xlner::stage_weigh},
        {"train-student", "Distill the target-language student", xlner::stage_train_student},
        {"evaluate", "Evaluate the configured arms", xlner::stage_evaluate},
        {"ablate", "Run the arm/weighting comparison grid", xlner::stage_ablate},
        {"run", "Full pipeline: corpora, training, evaluation, artifacts", xlner::stage_run},
    };
    for (const auto& s : stages) {
        CLI::App* cmd = app.add_subcommand(s.name, s.help);
        add_pipeline_options(cmd, args);
        cmd->callback([&stage, fn = s.fn] { stage = fn; });
    }

    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "Check analytic gradients against finite differences");
    gradcheck->add_option("--seed", gradcheck_seed, "Instance-sampling seed")
        ->capture_default_str();
    gradcheck->callback([&gradcheck_requested] { gradcheck_requested = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (gradcheck_requested) return run_gradcheck_command(gradcheck_seed);
    return run_stage(stage, args);
}
