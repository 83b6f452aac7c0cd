#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "coa/runner.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string run_dir;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "Path to the run configuration JSON")
        ->required();
    cmd->add_option("--run-dir", args.run_dir, "Run directory for artifacts and reports")
        ->required();
    cmd->add_option_function<uint64_t>(
        "--seed", [&args](const uint64_t& v) { args.seed = v; },
        "Override the global seed");
    cmd->add_option_function<int>(
        "--workers", [&args](const int& v) { args.workers = v; },
        "Override the worker pool width");
}

int run(const coa::StageOutcome& outcome) {
    if (!outcome.message.empty()) {
        std::cout << outcome.message;
        if (outcome.message.back() != '\n') std::cout << "\n";
    }
    if (outcome.exit_code != 0)
        std::cerr << "exit code " << outcome.exit_code
                  << (outcome.exit_code == 1 ? " (partial failures)" : " (configuration error)")
                  << "\n";
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chain-of-attack pipeline: targeted adversarial images against "
                 "vision-language models with offline toy backends"};
    app.require_subcommand(1);

    CommonArgs prepare_args, attack_args, evaluate_args, report_args, noise_args;
    CLI::App* prepare = app.add_subcommand("prepare", "Build the four-way example manifest");
    add_common(prepare, prepare_args);
    CLI::App* attack = app.add_subcommand("attack", "Run the attack chain over the manifest");
    add_common(attack, attack_args);
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Score victim responses and compute ASR");
    add_common(evaluate, evaluate_args);
    CLI::App* noise = app.add_subcommand("noise-sweep", "Noise-sensitivity sweep");
    add_common(noise, noise_args);
    CLI::App* report = app.add_subcommand("report", "Render plots and the run summary");
    add_common(report, report_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed())
            return run(coa::cmd_prepare(prepare_args.config, prepare_args.run_dir,
                                        prepare_args.seed, prepare_args.workers));
        if (attack->parsed())
            return run(coa::cmd_attack(attack_args.config, attack_args.run_dir,
                                       attack_args.seed, attack_args.workers));
        if (evaluate->parsed())
            return run(coa::cmd_evaluate(evaluate_args.config, evaluate_args.run_dir,
                                         evaluate_args.seed, evaluate_args.workers));
        if (noise->parsed())
            return run(coa::cmd_noise_sweep(noise_args.config, noise_args.run_dir,
                                            noise_args.seed, noise_args.workers));
        if (report->parsed())
            return run(coa::cmd_report(report_args.config, report_args.run_dir,
                                       report_args.seed, report_args.workers));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
