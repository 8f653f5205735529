#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fedbkd/errors.hpp"
#include "fedbkd/experiment.hpp"

using namespace fedbkd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("fedbkd_cfg_" + name);
    fs::remove_all(p);
    return p;
}

// Small but complete grid: runs in well under a second per cell.
std::string tiny_config(const fs::path& out_dir, const std::string& extra = "") {
    return std::string("{\n"
                       "  \"benchmark\": {\"classes\": 3, \"dim\": 6, \"samples_per_class\": 40, "
                       "\"separation\": 4.0},\n"
                       "  \"partition\": {\"clients\": 4, \"classes_per_client\": 2},\n"
                       "  \"federation\": {\"rounds\": 2, \"participation\": 0.5, "
                       "\"head_epochs\": 2},\n"
                       "  \"generator\": {\"count\": 16, \"epochs\": 1, \"batch_size\": 8},\n"
                       "  \"strategies\": [\"fedbkd\"],\n"
                       "  \"seeds\": [3],\n") +
           extra + "  \"output_dir\": \"" + out_dir.generic_string() + "\"\n}\n";
}

} // namespace

TEST_CASE("parse: empty object yields the documented defaults") {
    ExperimentConfig cfg = ExperimentConfig::parse("{}", "inline");
    CHECK(cfg.benchmark.classes == 5);
    CHECK(cfg.benchmark.dim == 20);
    CHECK(cfg.benchmark.samples_per_class == 200);
    CHECK(cfg.benchmark.separation == 6.0);
    CHECK(cfg.partition.client_count == 20);
    CHECK(cfg.partition.classes_per_client == 2);
    CHECK(cfg.partition.allocation == PartitionSpec::Allocation::Equal);
    CHECK(cfg.federation.rounds == 100);
    CHECK(cfg.federation.participation == 0.1);
    CHECK(cfg.federation.head_epochs == 10);
    CHECK(cfg.federation.local.learning_rate == 0.01);
    CHECK(cfg.federation.local.batch_size == 10);
    CHECK(cfg.federation.distill.epochs_global_to_local == 4);
    CHECK(cfg.federation.distill.epochs_local_to_global == 1);
    CHECK(cfg.federation.generator.count == 200);
    CHECK(cfg.federation.generator.epochs == 6);
    CHECK(cfg.federation.generator.noise_dim == 16);
    CHECK(cfg.evaluation.fine_tune_epochs == 10);
    CHECK(cfg.evaluation.personalization_window == 10);
    CHECK(cfg.strategies == std::vector<StrategyId>{StrategyId::fedbkd});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK(cfg.output_dir == "runs");
}

TEST_CASE("parse: sections override the defaults") {
    const std::string text = R"({
        "benchmark": {"classes": 4, "separation": 2.5},
        "partition": {"clients": 7, "allocation": "lognormal", "lognormal_sigma": 0.3},
        "federation": {"rounds": 9, "participation": 0.25},
        "distill": {"epochs_global_to_local": 2, "client_order_seed": 11},
        "generator": {"diversity_weight": 0.5},
        "evaluation": {"personalization_window": 4},
        "strategies": ["fedavg", "local_only"],
        "seeds": [5, 6, 7]
    })";
    ExperimentConfig cfg = ExperimentConfig::parse(text, "inline");
    CHECK(cfg.benchmark.classes == 4);
    CHECK(cfg.benchmark.separation == 2.5);
    CHECK(cfg.partition.client_count == 7);
    CHECK(cfg.partition.allocation == PartitionSpec::Allocation::Lognormal);
    CHECK(cfg.partition.lognormal_sigma == 0.3);
    CHECK(cfg.federation.rounds == 9);
    CHECK(cfg.federation.distill.epochs_global_to_local == 2);
    CHECK(cfg.federation.distill.client_order_seed == 11);
    CHECK(cfg.federation.generator.diversity_weight == 0.5);
    CHECK(cfg.evaluation.personalization_window == 4);
    CHECK(cfg.strategies ==
          std::vector<StrategyId>{StrategyId::fedavg, StrategyId::local_only});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6, 7});
}

TEST_CASE("parse: unknown keys are rejected with their dotted path") {
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::parse(R"({"federation": {"participaton": 0.2}})", "cfg"),
        doctest::Contains("cfg:federation.participaton"), ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(R"({"benchmrk": {}})", "cfg"),
                         doctest::Contains("benchmrk"), ConfigError);
}

TEST_CASE("parse: syntax errors carry the line number") {
    const std::string text = "{\n  \"benchmark\": {\n  \"classes\": 5,,\n}}";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(text, "cfg"), doctest::Contains("line 3"),
                         ConfigError);
}

TEST_CASE("parse: bad values are configuration errors") {
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"federation": {"rounds": 0}})", "cfg"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"federation": {"participation": 2.0}})", "cfg"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"strategies": []})", "cfg"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"strategies": ["fedbkd", "fedbkd"]})", "cfg"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"seeds": [1, 1]})", "cfg"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(R"({"seeds": [-3]})", "cfg"), ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::parse(R"({"partition": {"allocation": "zipf"}})", "cfg"),
        ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::parse(R"({"partition": {"classes_per_client": 9}})", "cfg"),
        ConfigError);
}

TEST_CASE("overrides: dotted sets for scalars and lists") {
    ExperimentConfig cfg = ExperimentConfig::parse(
        "{}", "inline",
        {"federation.rounds=7", "benchmark.separation=3.25", "strategies=fedavg,fedrep",
         "seeds=4,5", "partition.allocation=lognormal"});
    CHECK(cfg.federation.rounds == 7);
    CHECK(cfg.benchmark.separation == 3.25);
    CHECK(cfg.strategies == std::vector<StrategyId>{StrategyId::fedavg, StrategyId::fedrep});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(cfg.partition.allocation == PartitionSpec::Allocation::Lognormal);

    CHECK_THROWS_AS(ExperimentConfig::parse("{}", "inline", {"no_equals_sign"}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("{}", "inline", {"federation.nope=3"}), ConfigError);
}

TEST_CASE("canonical text: reparse fixpoint and stable hash") {
    ExperimentConfig cfg = ExperimentConfig::parse(
        R"({"federation": {"rounds": 5}, "seeds": [9, 2]})", "inline");
    const std::string canon = cfg.canonical_text();
    ExperimentConfig again = ExperimentConfig::parse(canon, "canon");
    CHECK(again.canonical_text() == canon);

    // key order in the source must not matter
    ExperimentConfig reordered = ExperimentConfig::parse(
        R"({"seeds": [9, 2], "federation": {"rounds": 5}})", "inline");
    CHECK(config_hash_hex(reordered.canonical_text()) == config_hash_hex(canon));

    ExperimentConfig other = ExperimentConfig::parse(
        R"({"federation": {"rounds": 6}, "seeds": [9, 2]})", "inline");
    CHECK(config_hash_hex(other.canonical_text()) != config_hash_hex(canon));

    CHECK(config_hash_hex(canon).size() == 16);
}

TEST_CASE("resolve_output_dir: environment root applies to relative paths only") {
    ExperimentConfig cfg;
    cfg.output_dir = "runs/x";
    unsetenv("FEDBKD_OUTPUT_ROOT");
    CHECK(resolve_output_dir(cfg) == fs::path("runs/x"));
    setenv("FEDBKD_OUTPUT_ROOT", "/tmp/fedbkd_root", 1);
    CHECK(resolve_output_dir(cfg) == fs::path("/tmp/fedbkd_root/runs/x"));
    cfg.output_dir = "/abs/path";
    CHECK(resolve_output_dir(cfg) == fs::path("/abs/path"));
    unsetenv("FEDBKD_OUTPUT_ROOT");
}

TEST_CASE("run_experiment: layout, metrics length, manifest") {
    const fs::path out = fresh_dir("layout");
    ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out), "inline");
    std::ostringstream log;
    const fs::path root = run_experiment(cfg, log);
    CHECK(root == out);

    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "manifest.json"));
    const fs::path run = out / "fedbkd" / "seed3";
    CHECK(fs::exists(run / "metrics.csv"));
    CHECK(fs::exists(run / "timing.csv"));
    CHECK(fs::exists(run / "summary.json"));
    CHECK(fs::exists(run / "global_final.ckpt"));
    CHECK(fs::exists(run / "global_last5_0.ckpt"));
    CHECK(fs::exists(run / "global_last5_1.ckpt"));
    CHECK_FALSE(fs::exists(run / "global_last5_2.ckpt")); // only two rounds ran

    const std::string metrics = slurp(run / "metrics.csv");
    CHECK(count_lines(metrics) == 3); // header + one line per round
    CHECK(metrics.rfind("round,mean_client_acc,agg_loss,g2l_kl,l2g_kl,gen_loss_mean\n", 0) == 0);

    const std::string manifest = slurp(out / "manifest.json");
    CHECK(manifest.find("\"config_hash\"") != std::string::npos);
    CHECK(manifest.find("fedbkd/seed3/metrics.csv") != std::string::npos);

    // two rounds cannot fill the ten-round personalization window
    const std::string summary = slurp(run / "summary.json");
    CHECK(summary.find("\"personalization\": null") != std::string::npos);

    fs::remove_all(out);
}

TEST_CASE("run_experiment: byte-identical metrics across reruns") {
    const fs::path out_a = fresh_dir("det_a");
    const fs::path out_b = fresh_dir("det_b");
    std::ostringstream log;
    run_experiment(ExperimentConfig::parse(tiny_config(out_a), "inline"), log);
    run_experiment(ExperimentConfig::parse(tiny_config(out_b), "inline"), log);

    CHECK(slurp(out_a / "fedbkd" / "seed3" / "metrics.csv") ==
          slurp(out_b / "fedbkd" / "seed3" / "metrics.csv"));
    CHECK(slurp(out_a / "fedbkd" / "seed3" / "summary.json") ==
          slurp(out_b / "fedbkd" / "seed3" / "summary.json"));
    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("run_experiment: full grid of strategy x seed cells") {
    const fs::path out = fresh_dir("grid");
    ExperimentConfig cfg = ExperimentConfig::parse(
        tiny_config(out), "inline",
        {"strategies=fedavg,local_only", "seeds=1,2,3"});
    std::ostringstream log;
    run_experiment(cfg, log);

    std::size_t cells = 0;
    for (const char* strategy : {"fedavg", "local_only"})
        for (int seed : {1, 2, 3})
            cells += fs::exists(out / strategy / ("seed" + std::to_string(seed)) /
                                "summary.json");
    CHECK(cells == 6);
    CHECK(count_lines(slurp(out / "manifest.json")) > 6);
    fs::remove_all(out);
}

TEST_CASE("write_report: mean and range from hand-placed summaries") {
    const fs::path out = fresh_dir("report");
    fs::create_directories(out / "fedbkd" / "seed1");
    fs::create_directories(out / "fedbkd" / "seed2");

    auto put = [&](const std::string& rel, const std::string& text) {
        std::ofstream os(out / rel, std::ios::binary);
        os << text;
    };
    put("fedbkd/seed1/summary.json",
        R"({"strategy": "fedbkd", "seed": 1, "personalization": 0.8, "generalization": 0.6})"
        "\n");
    put("fedbkd/seed2/summary.json",
        R"({"strategy": "fedbkd", "seed": 2, "personalization": 0.6, "generalization": null})"
        "\n");
    put("manifest.json", R"({
        "config_hash": "x", "version": "0.1.0",
        "runs": [
          {"strategy": "fedbkd", "seed": 1, "dir": "fedbkd/seed1",
           "summary": "fedbkd/seed1/summary.json"},
          {"strategy": "fedbkd", "seed": 2, "dir": "fedbkd/seed2",
           "summary": "fedbkd/seed2/summary.json"}
        ]})"
        "\n");

    std::ostringstream table;
    write_report(out, table);
    const std::string csv = slurp(out / "report.csv");
    // personalization: mean 0.7 range 0.2; generalization: single value, range 0
    CHECK(csv.find("fedbkd,2,0.69999999999999996,0.20000000000000007,0.59999999999999998,0") !=
          std::string::npos);
    CHECK(table.str().find("0.7000 +/- 0.2000") != std::string::npos);
    CHECK(table.str().find("0.6000 +/- 0.0000") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("write_report: missing manifest and empty runs fail clearly") {
    const fs::path out = fresh_dir("noreport");
    fs::create_directories(out);
    std::ostringstream sink;
    CHECK_THROWS_WITH_AS(write_report(out, sink), doctest::Contains("incomplete"), InputError);

    std::ofstream(out / "manifest.json") << R"({"runs": []})" << "\n";
    CHECK_THROWS_WITH_AS(write_report(out, sink), doctest::Contains("no runs"), InputError);
    fs::remove_all(out);
}

TEST_CASE("write_diagnostics: logit distances and activation dumps appear") {
    const fs::path out = fresh_dir("diag");
    ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(out), "inline");
    std::ostringstream log;
    run_experiment(cfg, log);
    write_diagnostics(out, log);

    const fs::path run = out / "fedbkd" / "seed3";
    CHECK(fs::exists(run / "diagnostic_logits.csv"));
    CHECK(fs::exists(run / "activations_layer0.txt"));
    CHECK(fs::exists(run / "activations_layer1.txt"));
    const std::string csv = slurp(run / "diagnostic_logits.csv");
    CHECK(csv.rfind("batch_index,d_synthetic_real,d_random_real\n", 0) == 0);
    CHECK(count_lines(csv) >= 2);
    fs::remove_all(out);
}

TEST_CASE("execute_single_run: strategy changes nothing about the data layout") {
    ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(fresh_dir("iso")), "inline");
    SingleRunResult a = execute_single_run(cfg, StrategyId::fedbkd, 5);
    SingleRunResult b = execute_single_run(cfg, StrategyId::local_only, 5);

    REQUIRE(a.federation.clients.size() == b.federation.clients.size());
    for (std::size_t i = 0; i < a.federation.clients.size(); ++i) {
        CHECK(a.federation.clients[i].data.train_rows == b.federation.clients[i].data.train_rows);
        CHECK(a.federation.clients[i].data.test_rows == b.federation.clients[i].data.test_rows);
    }
    CHECK(a.holdout.client.train_rows == b.holdout.client.train_rows);
    CHECK(a.federation_rows == b.federation_rows);

    // and the holdout rows never leak into the federation
    for (std::size_t r : a.holdout.client.train_rows)
        for (std::size_t f : a.federation_rows) CHECK(r != f);
}

TEST_CASE("execute_single_run: seed changes the benchmark, scores stay defined") {
    ExperimentConfig cfg = ExperimentConfig::parse(tiny_config(fresh_dir("seed")), "inline");
    cfg.federation.rounds = 5;
    cfg.evaluation.personalization_window = 5;
    SingleRunResult r = execute_single_run(cfg, StrategyId::fedavg, 8);
    CHECK(r.federation.history.size() == 5);
    CHECK(r.personalization >= 0.0);
    CHECK(r.personalization <= 1.0);
    CHECK(r.federation.last_global_checkpoints.size() == 5);
    CHECK(r.generalization >= 0.0);
    CHECK(r.generalization <= 1.0);

    SingleRunResult other = execute_single_run(cfg, StrategyId::fedavg, 9);
    CHECK(other.federation.clients[0].data.train_rows !=
          r.federation.clients[0].data.train_rows);
}
