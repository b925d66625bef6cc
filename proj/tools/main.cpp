#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "commands.hpp"
#include "csd/error.hpp"
#include "csd/numerics/kernels.hpp"
#include "csd/version.hpp"

namespace {

using namespace csd;
using namespace csd::cli;

enum Exit { Ok = 0, ContractFailure = 1, InputFailure = 2 };

struct Command {
    const char* name;
    const char* help;
    const char* seed_key;  // seeds.<key> that --seed replaces
    void (*run)(const Context&, const CommandOptions&);
};

const Command kCommands[] = {
    {"synth", "Generate the synthetic sensor traces", "data", run_synth},
    {"train", "Train a severity classifier", "model", run_train},
    {"eval", "Score a classifier on the test trace", "model", run_eval},
    {"attack", "Craft white-box attacks and score the classifier under attack", "attack", run_attack},
    {"transfer", "Craft on the transfer source and score the target classifier", "attack", run_transfer},
    {"explain", "Input-level Shapley attributions and global feature importance", "explain", run_explain},
    {"sign", "Build the labeled signature repository", "explain", run_sign},
    {"fit-detector", "Train attack detectors on repository signatures", "detector", run_fit_detector},
    {"detect-eval", "Score detectors on held-out signatures", "detector", run_detect_eval},
    {"simulate", "Replay the stream trace through the closed loop", "pipeline", run_simulate},
    {"compare", "Agreement of attacked and defended runs with the baseline", "pipeline", run_compare},
    {"report", "Collect every metric into report.md", "pipeline", run_report},
};

std::uint64_t stage_seed(const RunConfig& c, const std::string& key)
{
    const std::map<std::string, std::uint64_t> seeds = {
        {"data", c.seeds.data},         {"model", c.seeds.model},       {"attack", c.seeds.attack},
        {"explain", c.seeds.explain},   {"detector", c.seeds.detector}, {"pipeline", c.seeds.pipeline},
    };
    return seeds.at(key);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cybersickness classifier attack and defense pipeline"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    std::string config_path, output_dir, family, kind, mode = "all";
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    int threads = 0;
    std::vector<std::string> overrides;

    for (const auto& c : kCommands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "Run config (JSON)")->required();
        sub->add_option("--seed", seed, std::string("Replaces seeds.") + c.seed_key);
        sub->add_option("--threads", threads, "Worker threads for parallel kernels (0 = runtime default)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--output-dir", output_dir, "Replaces output_dir");
        sub->add_option("--set", overrides, "Config override key.path=value (repeatable)");
        const std::string name = c.name;
        if (name == "train" || name == "eval" || name == "attack")
            sub->add_option("--family", family, "Classifier family (lstm, gru, cnn-lstm); default model.family");
        if (name == "attack") sub->add_option("--epsilon", epsilon, "Replaces the FGSM and PGD budget");
        if (name == "fit-detector" || name == "detect-eval")
            sub->add_option("--kind", kind, "Detector (rf, gbt, ffnn); default all of detector.kinds");
        if (name == "simulate")
            sub->add_option("--mode", mode, "baseline, attacked, defended or all")
                ->check(CLI::IsMember({"baseline", "attacked", "defended", "all"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : InputFailure;
    }

    const Command* cmd = nullptr;
    for (const auto& c : kCommands)
        if (app.got_subcommand(c.name)) cmd = &c;

    try {
        if (seed) overrides.push_back(std::string("seeds.") + cmd->seed_key + "=" + std::to_string(*seed));
        if (!output_dir.empty()) overrides.push_back("output_dir=" + nlohmann::json(output_dir).dump());
        if (epsilon) {
            overrides.push_back("attack.fgsm.epsilon=" + nlohmann::json(*epsilon).dump());
            overrides.push_back("attack.pgd.epsilon=" + nlohmann::json(*epsilon).dump());
        }
        auto config = load_config(config_path, overrides);
        num::kernels::set_threads(threads);

        CommandOptions opt;
        if (!family.empty()) opt.family = clf::parse_family(family);
        if (!kind.empty()) opt.kind = detect::parse_kind(kind);
        opt.mode = mode;
        const std::uint64_t s = stage_seed(config, cmd->seed_key);
        const Context ctx(std::move(config), cmd->name, s, std::cout);
        cmd->run(ctx, opt);
        return Ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return InputFailure;
    } catch (const IoError& e) {
        std::cerr << "input/output error: " << e.what() << "\n";
        return InputFailure;
    } catch (const ContractViolation& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return ContractFailure;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return ContractFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ContractFailure;
    }
}
