#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedbkd/dataset.hpp"
#include "fedbkd/evaluation.hpp"
#include "fedbkd/protocol.hpp"

namespace fedbkd {

struct BenchmarkConfig {
    int classes = 5;
    std::size_t dim = 20;
    std::size_t samples_per_class = 200;
    double separation = 6.0;

    void validate() const;
};

struct EvalConfig {
    std::size_t fine_tune_epochs = 10;
    double fine_tune_learning_rate = 0.01;
    std::size_t personalization_window = 10;

    void validate() const;
};

// Complete description of an experiment grid; every run is a pure function of
// this plus one (strategy, seed) pair.
struct ExperimentConfig {
    BenchmarkConfig benchmark;
    PartitionSpec partition;   // per-run seed derived from the run seed
    FedConfig federation;      // holds local, distill and generator settings
    EvalConfig evaluation;
    std::vector<StrategyId> strategies = {StrategyId::fedbkd};
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "runs";

    void validate() const;

    // Parses the JSON text, applying "dotted.key=value" overrides first.
    // Unknown keys anywhere are rejected; parse errors carry the line number.
    static ExperimentConfig parse(const std::string& text, const std::string& origin,
                                  const std::vector<std::string>& overrides = {});
    static ExperimentConfig load(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {});

    // Full canonical JSON (defaults materialized, keys sorted); reparsing it
    // yields an identical config, and its FNV-1a hash names the run.
    std::string canonical_text() const;
};

std::string config_hash_hex(const std::string& canonical_text);

// Config output_dir resolved against the FEDBKD_OUTPUT_ROOT environment
// variable when it is set and the path is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

// One (strategy, seed) cell: benchmark, holdout carve-out, partition,
// federation, scores. Scores are NaN when the run is too short to measure.
struct SingleRunResult {
    FederationResult federation;
    HoldoutResult holdout;
    std::vector<std::size_t> federation_rows; // original benchmark row ids
    double personalization = 0.0;
    double generalization = 0.0;
};

SingleRunResult execute_single_run(const ExperimentConfig& cfg, StrategyId strategy,
                                   std::uint64_t seed);

// Runs the whole grid under resolve_output_dir(cfg)/: per run writes
// metrics.csv, timing.csv, summary.json and global checkpoints in
// <strategy>/seed<seed>/; a canonical config copy sits at the root and
// manifest.json is written last, atomically.
std::filesystem::path run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// Aggregates summary files under a completed run directory into a CSV file
// (report.csv) and an aligned table on `out`. Mean and range over seeds.
void write_report(const std::filesystem::path& run_dir, std::ostream& out);

// Rebuilds the benchmark from the stored config, loads each run's final global
// checkpoint, trains a probe generator against it, and writes the logit
// distance CSV plus representation activation dumps into the run directory.
void write_diagnostics(const std::filesystem::path& run_dir, std::ostream& out);

} // namespace fedbkd
