#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbkd/errors.hpp"
#include "fedbkd/experiment.hpp"

namespace {

int run_command(const std::string& config_path, const std::vector<std::string>& overrides) {
    fedbkd::ExperimentConfig cfg;
    try {
        cfg = fedbkd::ExperimentConfig::load(config_path, overrides);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    try {
        const auto root = fedbkd::run_experiment(cfg, std::cout);
        std::cout << "report: " << root.string() << "\n";
        return 0;
    } catch (const fedbkd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int report_command(const std::string& run_dir) {
    try {
        fedbkd::write_report(run_dir, std::cout);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int diagnose_command(const std::string& run_dir) {
    try {
        fedbkd::write_diagnostics(run_dir, std::cout);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated simulation with data-free bidirectional distillation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    CLI::App* run = app.add_subcommand("run", "Execute the experiment grid from a config file");
    run->add_option("--config", config_path, "JSON config path")->required();
    run->add_option("--set", overrides, "Override a value as dotted.key=value (repeatable)");

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "Summarize a completed run directory");
    report->add_option("rundir", report_dir, "Run directory with manifest.json")->required();

    std::string diag_dir;
    CLI::App* diagnose =
        app.add_subcommand("diagnose", "Emit logit-distance and activation diagnostics");
    diagnose->add_option("rundir", diag_dir, "Run directory with manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (run->parsed()) return run_command(config_path, overrides);
    if (report->parsed()) return report_command(report_dir);
    return diagnose_command(diag_dir);
}
