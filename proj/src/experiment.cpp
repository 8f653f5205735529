#include "fedbkd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedbkd/checkpoint.hpp"
#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersionTag = "0.1.0";
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError("config: " + path + ": " + msg);
}

// Object wrapper that tracks key usage so typos surface as errors.
class Section {
public:
    Section(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
        if (!node.is_object()) fail(path_, "expected an object");
    }

    const json* find(const std::string& key) {
        used_.insert(key);
        auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) fail(path_ + "." + key, "expected a number");
        return v->get<double>();
    }

    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
            return static_cast<std::uint64_t>(v->get<std::int64_t>());
        fail(path_ + "." + key, "expected a non-negative integer");
    }

    std::size_t index(const std::string& key, std::size_t fallback) {
        return static_cast<std::size_t>(u64(key, fallback));
    }

    int integer(const std::string& key, int fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer())
            fail(path_ + "." + key, "expected an integer");
        return v->get<int>();
    }

    std::string str(const std::string& key, std::string fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) fail(path_ + "." + key, "expected a string");
        return v->get<std::string>();
    }

    void finish() {
        for (auto it = node_->begin(); it != node_->end(); ++it)
            if (!used_.count(it.key()))
                fail(path_ + "." + it.key(), "unknown key");
    }

    const std::string& path() const { return path_; }

private:
    const json* node_;
    std::string path_;
    std::set<std::string> used_;
};

json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i < stop; ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + e.what());
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

void apply_override(json& root, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + expr + "' is not of the form key=value");
    const std::string key = expr.substr(0, eq);
    const std::string value = expr.substr(eq + 1);
    const std::vector<std::string> parts = split(key, '.');

    json parsed;
    if (key == "strategies") {
        parsed = json::array();
        for (const std::string& tok : split(value, ',')) parsed.push_back(tok);
    } else if (key == "seeds") {
        parsed = json::array();
        for (const std::string& tok : split(value, ',')) {
            try {
                parsed.push_back(std::stoull(tok));
            } catch (const std::exception&) {
                throw ConfigError("override seeds: '" + tok + "' is not an integer");
            }
        }
    } else {
        try {
            parsed = json::parse(value);
            if (parsed.is_object()) parsed = value; // literal braces stay text
        } catch (const json::exception&) {
            parsed = value;
        }
    }

    json* cur = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (parts[i].empty()) throw ConfigError("override '" + expr + "' has an empty path part");
        if (!cur->contains(parts[i])) (*cur)[parts[i]] = json::object();
        cur = &(*cur)[parts[i]];
        if (!cur->is_object())
            throw ConfigError("override '" + expr + "' descends into a non-object");
    }
    if (parts.back().empty()) throw ConfigError("override '" + expr + "' has an empty key");
    (*cur)[parts.back()] = parsed;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw InputError("write to " + path.string() + " failed");
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_file(tmp, content);
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string timestamp_utc() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double json_to_score(const json& v) {
    return v.is_number() ? v.get<double>() : kNan;
}

json score_to_json(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

} // namespace

void BenchmarkConfig::validate() const {
    if (classes < 2) throw ConfigError("benchmark.classes must be at least 2");
    if (dim < 2) throw ConfigError("benchmark.dim must be at least 2");
    if (samples_per_class < 1) throw ConfigError("benchmark.samples_per_class must be at least 1");
    if (!(separation > 0.0)) throw ConfigError("benchmark.separation must be positive");
}

void EvalConfig::validate() const {
    if (fine_tune_epochs < 1) throw ConfigError("evaluation.fine_tune_epochs must be at least 1");
    if (!(fine_tune_learning_rate > 0.0))
        throw ConfigError("evaluation.fine_tune_learning_rate must be positive");
    if (personalization_window < 1)
        throw ConfigError("evaluation.personalization_window must be at least 1");
}

void ExperimentConfig::validate() const {
    benchmark.validate();
    try {
        partition.validate(benchmark.classes);
    } catch (const InputError& e) {
        throw ConfigError(std::string("partition: ") + e.what());
    }
    if (federation.rounds < 1) throw ConfigError("federation.rounds must be at least 1");
    federation.validate();
    evaluation.validate();
    if (strategies.empty()) throw ConfigError("strategies list is empty");
    if (seeds.empty()) throw ConfigError("seeds list is empty");
    if (output_dir.empty()) throw ConfigError("output_dir is empty");
    std::set<std::string> names;
    for (StrategyId s : strategies)
        if (!names.insert(to_string(s)).second)
            throw ConfigError("strategy '" + to_string(s) + "' listed twice");
    std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
    if (unique_seeds.size() != seeds.size()) throw ConfigError("duplicate seeds");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin,
                                         const std::vector<std::string>& overrides) {
    json root = parse_json_text(text, origin);
    if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");
    for (const std::string& o : overrides) apply_override(root, o);

    ExperimentConfig cfg;
    Section top(root, origin);

    if (const json* node = top.find("benchmark")) {
        Section s(*node, origin + ":benchmark");
        cfg.benchmark.classes = s.integer("classes", cfg.benchmark.classes);
        cfg.benchmark.dim = s.index("dim", cfg.benchmark.dim);
        cfg.benchmark.samples_per_class =
            s.index("samples_per_class", cfg.benchmark.samples_per_class);
        cfg.benchmark.separation = s.number("separation", cfg.benchmark.separation);
        s.finish();
    }
    if (const json* node = top.find("partition")) {
        Section s(*node, origin + ":partition");
        cfg.partition.client_count = s.index("clients", cfg.partition.client_count);
        cfg.partition.classes_per_client =
            s.integer("classes_per_client", cfg.partition.classes_per_client);
        const std::string alloc = s.str(
            "allocation",
            cfg.partition.allocation == PartitionSpec::Allocation::Equal ? "equal" : "lognormal");
        if (alloc == "equal")
            cfg.partition.allocation = PartitionSpec::Allocation::Equal;
        else if (alloc == "lognormal")
            cfg.partition.allocation = PartitionSpec::Allocation::Lognormal;
        else
            fail(s.path() + ".allocation", "expected 'equal' or 'lognormal'");
        cfg.partition.lognormal_sigma = s.number("lognormal_sigma", cfg.partition.lognormal_sigma);
        cfg.partition.mean_samples = s.number("mean_samples", cfg.partition.mean_samples);
        s.finish();
    }
    if (const json* node = top.find("federation")) {
        Section s(*node, origin + ":federation");
        cfg.federation.rounds = s.index("rounds", cfg.federation.rounds);
        cfg.federation.participation = s.number("participation", cfg.federation.participation);
        cfg.federation.head_epochs = s.index("head_epochs", cfg.federation.head_epochs);
        cfg.federation.local.learning_rate =
            s.number("learning_rate", cfg.federation.local.learning_rate);
        cfg.federation.local.batch_size = s.index("batch_size", cfg.federation.local.batch_size);
        s.finish();
    }
    if (const json* node = top.find("distill")) {
        Section s(*node, origin + ":distill");
        DistillConfig& d = cfg.federation.distill;
        d.epochs_global_to_local = s.index("epochs_global_to_local", d.epochs_global_to_local);
        d.epochs_local_to_global = s.index("epochs_local_to_global", d.epochs_local_to_global);
        d.learning_rate = s.number("learning_rate", d.learning_rate);
        d.batch_size = s.index("batch_size", d.batch_size);
        d.client_order_seed = s.u64("client_order_seed", d.client_order_seed);
        s.finish();
    }
    if (const json* node = top.find("generator")) {
        Section s(*node, origin + ":generator");
        GenTrainConfig& g = cfg.federation.generator;
        g.count = s.index("count", g.count);
        g.diversity_weight = s.number("diversity_weight", g.diversity_weight);
        g.epochs = s.index("epochs", g.epochs);
        g.learning_rate = s.number("learning_rate", g.learning_rate);
        g.batch_size = s.index("batch_size", g.batch_size);
        g.noise_dim = s.index("noise_dim", g.noise_dim);
        g.init_scale = s.number("init_scale", g.init_scale);
        g.inject_layer = s.index("inject_layer", g.inject_layer);
        s.finish();
    }
    if (const json* node = top.find("evaluation")) {
        Section s(*node, origin + ":evaluation");
        cfg.evaluation.fine_tune_epochs =
            s.index("fine_tune_epochs", cfg.evaluation.fine_tune_epochs);
        cfg.evaluation.fine_tune_learning_rate =
            s.number("fine_tune_learning_rate", cfg.evaluation.fine_tune_learning_rate);
        cfg.evaluation.personalization_window =
            s.index("personalization_window", cfg.evaluation.personalization_window);
        s.finish();
    }
    if (const json* node = top.find("strategies")) {
        if (!node->is_array()) fail(origin + ".strategies", "expected an array of strategy names");
        cfg.strategies.clear();
        for (const json& v : *node) {
            if (!v.is_string()) fail(origin + ".strategies", "expected strategy names");
            cfg.strategies.push_back(parse_strategy(v.get<std::string>()));
        }
    }
    if (const json* node = top.find("seeds")) {
        if (!node->is_array()) fail(origin + ".seeds", "expected an array of integers");
        cfg.seeds.clear();
        for (const json& v : *node) {
            if (v.is_number_unsigned())
                cfg.seeds.push_back(v.get<std::uint64_t>());
            else if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
                cfg.seeds.push_back(static_cast<std::uint64_t>(v.get<std::int64_t>()));
            else
                fail(origin + ".seeds", "expected non-negative integers");
        }
    }
    cfg.output_dir = top.str("output_dir", cfg.output_dir);
    top.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path,
                                        const std::vector<std::string>& overrides) {
    return parse(read_file(path), path.string(), overrides);
}

std::string ExperimentConfig::canonical_text() const {
    json j;
    j["benchmark"] = {{"classes", benchmark.classes},
                      {"dim", benchmark.dim},
                      {"samples_per_class", benchmark.samples_per_class},
                      {"separation", benchmark.separation}};
    j["partition"] = {
        {"clients", partition.client_count},
        {"classes_per_client", partition.classes_per_client},
        {"allocation",
         partition.allocation == PartitionSpec::Allocation::Equal ? "equal" : "lognormal"},
        {"lognormal_sigma", partition.lognormal_sigma},
        {"mean_samples", partition.mean_samples}};
    j["federation"] = {{"rounds", federation.rounds},
                       {"participation", federation.participation},
                       {"head_epochs", federation.head_epochs},
                       {"learning_rate", federation.local.learning_rate},
                       {"batch_size", federation.local.batch_size}};
    j["distill"] = {{"epochs_global_to_local", federation.distill.epochs_global_to_local},
                    {"epochs_local_to_global", federation.distill.epochs_local_to_global},
                    {"learning_rate", federation.distill.learning_rate},
                    {"batch_size", federation.distill.batch_size},
                    {"client_order_seed", federation.distill.client_order_seed}};
    j["generator"] = {{"count", federation.generator.count},
                      {"diversity_weight", federation.generator.diversity_weight},
                      {"epochs", federation.generator.epochs},
                      {"learning_rate", federation.generator.learning_rate},
                      {"batch_size", federation.generator.batch_size},
                      {"noise_dim", federation.generator.noise_dim},
                      {"init_scale", federation.generator.init_scale},
                      {"inject_layer", federation.generator.inject_layer}};
    j["evaluation"] = {{"fine_tune_epochs", evaluation.fine_tune_epochs},
                       {"fine_tune_learning_rate", evaluation.fine_tune_learning_rate},
                       {"personalization_window", evaluation.personalization_window}};
    json strats = json::array();
    for (StrategyId s : strategies) strats.push_back(to_string(s));
    j["strategies"] = strats;
    j["seeds"] = seeds;
    // output_dir is a location, not an experimental parameter: reruns of the
    // same experiment elsewhere must share the hash and the artifacts
    return j.dump(2) + "\n";
}

std::string config_hash_hex(const std::string& canonical_text) {
    const std::uint64_t h = hash_tag(canonical_text);
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

fs::path resolve_output_dir(const ExperimentConfig& cfg) {
    fs::path out = cfg.output_dir;
    if (const char* root = std::getenv("FEDBKD_OUTPUT_ROOT"); root && *root && out.is_relative())
        out = fs::path(root) / out;
    return out;
}

SingleRunResult execute_single_run(const ExperimentConfig& cfg, StrategyId strategy,
                                   std::uint64_t seed) {
    cfg.validate();
    const LabeledDataset bench = make_gaussian_benchmark(
        cfg.benchmark.classes, cfg.benchmark.dim, cfg.benchmark.samples_per_class,
        cfg.benchmark.separation, derive_seed(seed, "bench"));

    PartitionSpec ps = cfg.partition;
    ps.seed = derive_seed(seed, "partition");

    SingleRunResult out;
    out.holdout = holdout_client(bench, ps);
    const std::vector<ClientDataset> parts = partition_by_shards(out.holdout.remaining, ps);
    for (const ClientDataset& c : parts) {
        for (std::size_t r : c.train_rows) out.federation_rows.push_back(out.holdout.remaining_rows[r]);
        for (std::size_t r : c.test_rows) out.federation_rows.push_back(out.holdout.remaining_rows[r]);
    }
    std::sort(out.federation_rows.begin(), out.federation_rows.end());

    FedConfig fc = cfg.federation;
    fc.master_seed = derive_seed(seed, "federation");
    out.federation = run_federation(strategy, fc, parts);

    out.personalization = kNan;
    if (out.federation.history.size() >= cfg.evaluation.personalization_window)
        out.personalization =
            personalization_score(out.federation.history, cfg.evaluation.personalization_window);

    out.generalization = kNan;
    if (out.federation.last_global_checkpoints.size() == 5 &&
        out.holdout.client.train.size() > 0 && out.holdout.client.test.size() > 0) {
        FineTuneConfig ft;
        ft.epochs = cfg.evaluation.fine_tune_epochs;
        ft.sgd.learning_rate = cfg.evaluation.fine_tune_learning_rate;
        ft.sgd.batch_size = cfg.federation.local.batch_size;
        ft.seed = derive_seed(seed, "finetune");
        out.generalization = generalization_score(out.federation.last_global_checkpoints,
                                                  out.holdout.client, ft, &out.federation_rows);
    }
    return out;
}

namespace {

std::string metrics_csv(const std::vector<RoundReport>& history) {
    std::ostringstream os;
    os << "round,mean_client_acc,agg_loss,g2l_kl,l2g_kl,gen_loss_mean\n";
    for (const RoundReport& r : history)
        os << r.round << ',' << fmt_double(r.mean_client_accuracy) << ','
           << fmt_double(r.aggregation_loss) << ',' << fmt_double(r.g2l_kl) << ','
           << fmt_double(r.l2g_kl) << ',' << fmt_double(r.generator_loss_mean) << '\n';
    return os.str();
}

std::string timing_csv(const std::vector<RoundReport>& history) {
    std::ostringstream os;
    os << "round,seconds\n";
    for (const RoundReport& r : history) os << r.round << ',' << fmt_double(r.seconds) << '\n';
    return os.str();
}

} // namespace

fs::path run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const fs::path root = resolve_output_dir(cfg);
    fs::create_directories(root);

    const std::string canonical = cfg.canonical_text();
    const std::string hash = config_hash_hex(canonical);
    write_file(root / "config.json", canonical);

    json manifest;
    manifest["config_hash"] = hash;
    manifest["version"] = kVersionTag;
    manifest["started"] = timestamp_utc();
    json runs = json::array();

    for (StrategyId strategy : cfg.strategies) {
        for (std::uint64_t seed : cfg.seeds) {
            const fs::path rel = fs::path(to_string(strategy)) / ("seed" + std::to_string(seed));
            const fs::path dir = root / rel;
            fs::create_directories(dir);
            log << "run " << to_string(strategy) << " seed " << seed << " ..." << std::flush;

            const SingleRunResult r = execute_single_run(cfg, strategy, seed);

            write_file(dir / "metrics.csv", metrics_csv(r.federation.history));
            write_file(dir / "timing.csv", timing_csv(r.federation.history));

            json summary;
            summary["strategy"] = to_string(strategy);
            summary["seed"] = seed;
            summary["config_hash"] = hash;
            summary["rounds"] = r.federation.history.size();
            summary["personalization"] = score_to_json(r.personalization);
            summary["generalization"] = score_to_json(r.generalization);
            summary["final_mean_client_acc"] =
                r.federation.history.empty()
                    ? json(nullptr)
                    : json(r.federation.history.back().mean_client_accuracy);
            write_file(dir / "summary.json", summary.dump(2) + "\n");

            save_checkpoint(r.federation.server.global_model, dir / "global_final.ckpt");
            for (std::size_t i = 0; i < r.federation.last_global_checkpoints.size(); ++i)
                save_checkpoint(r.federation.last_global_checkpoints[i],
                                dir / ("global_last5_" + std::to_string(i) + ".ckpt"));

            json entry;
            entry["strategy"] = to_string(strategy);
            entry["seed"] = seed;
            entry["dir"] = rel.generic_string();
            entry["metrics"] = (rel / "metrics.csv").generic_string();
            entry["summary"] = (rel / "summary.json").generic_string();
            entry["checkpoint"] = (rel / "global_final.ckpt").generic_string();
            runs.push_back(entry);

            log << " personalization="
                << (std::isnan(r.personalization) ? "n/a" : fmt_double(r.personalization))
                << " generalization="
                << (std::isnan(r.generalization) ? "n/a" : fmt_double(r.generalization)) << "\n";
        }
    }

    manifest["runs"] = runs;
    manifest["finished"] = timestamp_utc();
    write_file_atomic(root / "manifest.json", manifest.dump(2) + "\n");
    return root;
}

namespace {

json load_manifest(const fs::path& run_dir) {
    const fs::path mpath = run_dir / "manifest.json";
    if (!fs::exists(mpath))
        throw InputError("run at " + run_dir.string() +
                         " is incomplete: manifest.json is missing");
    return parse_json_text(read_file(mpath), mpath.string());
}

struct StrategyScores {
    std::vector<double> personalization;
    std::vector<double> generalization;
    std::vector<std::uint64_t> seeds;
};

struct MeanRange {
    double mean = kNan;
    double range = kNan;
    std::size_t n = 0;
};

MeanRange summarize(const std::vector<double>& values) {
    MeanRange out;
    double sum = 0.0, lo = 0.0, hi = 0.0;
    for (double v : values) {
        if (std::isnan(v)) continue;
        if (out.n == 0) {
            lo = hi = v;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        sum += v;
        ++out.n;
    }
    if (out.n > 0) {
        out.mean = sum / static_cast<double>(out.n);
        out.range = hi - lo;
    }
    return out;
}

std::string fmt_score(const MeanRange& m) {
    if (m.n == 0) return "-";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f +/- %.4f", m.mean, m.range);
    return buf;
}

} // namespace

void write_report(const fs::path& run_dir, std::ostream& out) {
    const json manifest = load_manifest(run_dir);
    if (!manifest.contains("runs") || !manifest["runs"].is_array() || manifest["runs"].empty())
        throw InputError("no runs found in " + run_dir.string());

    std::vector<std::string> order;
    std::map<std::string, StrategyScores> by_strategy;
    for (const json& entry : manifest["runs"]) {
        const std::string strategy = entry.at("strategy").get<std::string>();
        const fs::path spath = run_dir / entry.at("summary").get<std::string>();
        const json summary = parse_json_text(read_file(spath), spath.string());
        if (!by_strategy.count(strategy)) order.push_back(strategy);
        StrategyScores& s = by_strategy[strategy];
        s.personalization.push_back(json_to_score(summary.at("personalization")));
        s.generalization.push_back(json_to_score(summary.at("generalization")));
        s.seeds.push_back(summary.at("seed").get<std::uint64_t>());
    }

    std::ostringstream csv;
    csv << "strategy,seeds,personalization_mean,personalization_range,"
           "generalization_mean,generalization_range\n";
    for (const std::string& name : order) {
        const StrategyScores& s = by_strategy[name];
        const MeanRange p = summarize(s.personalization);
        const MeanRange g = summarize(s.generalization);
        csv << name << ',' << s.seeds.size() << ',' << fmt_double(p.mean) << ','
            << fmt_double(p.range) << ',' << fmt_double(g.mean) << ',' << fmt_double(g.range)
            << '\n';
    }
    write_file(run_dir / "report.csv", csv.str());

    std::size_t width = 8;
    for (const std::string& name : order) width = std::max(width, name.size());
    out << std::left << std::setw(static_cast<int>(width)) << "strategy" << "  "
        << std::setw(22) << "personalization" << "  " << std::setw(22) << "generalization"
        << "  seeds\n";
    for (const std::string& name : order) {
        const StrategyScores& s = by_strategy[name];
        out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::setw(22)
            << fmt_score(summarize(s.personalization)) << "  " << std::setw(22)
            << fmt_score(summarize(s.generalization)) << "  " << s.seeds.size() << "\n";
    }
}

void write_diagnostics(const fs::path& run_dir, std::ostream& out) {
    const json manifest = load_manifest(run_dir);
    if (!manifest.contains("runs") || !manifest["runs"].is_array() || manifest["runs"].empty())
        throw InputError("no runs found in " + run_dir.string());
    const ExperimentConfig cfg = ExperimentConfig::load(run_dir / "config.json");
    if (cfg.federation.generator.inject_layer != 0)
        throw InputError("logit diagnostics need input-space synthesis (inject_layer 0)");

    for (const json& entry : manifest["runs"]) {
        const std::string strategy = entry.at("strategy").get<std::string>();
        const std::uint64_t seed = entry.at("seed").get<std::uint64_t>();
        const fs::path dir = run_dir / entry.at("dir").get<std::string>();
        const LayeredModel global = load_checkpoint(dir / "global_final.ckpt");

        const LabeledDataset bench = make_gaussian_benchmark(
            cfg.benchmark.classes, cfg.benchmark.dim, cfg.benchmark.samples_per_class,
            cfg.benchmark.separation, derive_seed(seed, "bench"));
        const std::size_t count = std::min<std::size_t>(cfg.federation.generator.count,
                                                        bench.size());
        GenTrainConfig gen = cfg.federation.generator;
        gen.count = count;

        const Matrix synthetic = pooled_synthetic_inputs(
            global, gen, derive_seed(seed, "diagnose"), cfg.partition.client_count);

        Matrix random_inputs(count, bench.dim());
        Rng rng(derive_seed(seed, "diagnose.random"));
        for (double& v : random_inputs.data) v = rng.normal();

        Rng pick(derive_seed(seed, "diagnose.real"));
        const std::vector<std::size_t> rows = pick.sample_without_replacement(bench.size(), count);
        LabeledDataset real;
        real.class_count = bench.class_count;
        real.features = bench.features.take_rows(rows);
        for (std::size_t r : rows) real.labels.push_back(bench.labels[r]);

        const LogitDistanceSeries series = logit_l1_diagnostic(
            global, synthetic, random_inputs, real, gen.batch_size);

        std::ostringstream csv;
        csv << "batch_index,d_synthetic_real,d_random_real\n";
        for (std::size_t i = 0; i < series.synthetic_vs_real.size(); ++i)
            csv << i << ',' << fmt_double(series.synthetic_vs_real[i]) << ','
                << fmt_double(series.random_vs_real[i]) << '\n';
        write_file(dir / "diagnostic_logits.csv", csv.str());

        const std::size_t probe_rows = std::min<std::size_t>(32, real.size());
        std::vector<std::size_t> head(probe_rows);
        for (std::size_t i = 0; i < probe_rows; ++i) head[i] = i;
        const std::vector<Matrix> acts =
            representation_dump(global, real.features.take_rows(head));
        for (std::size_t layer = 0; layer < acts.size(); ++layer) {
            std::ostringstream grid;
            const Matrix& m = acts[layer];
            for (std::size_t r = 0; r < m.rows; ++r) {
                for (std::size_t c = 0; c < m.cols; ++c) {
                    if (c) grid << ' ';
                    grid << fmt_double(m(r, c));
                }
                grid << '\n';
            }
            write_file(dir / ("activations_layer" + std::to_string(layer) + ".txt"), grid.str());
        }

        out << "diagnose " << strategy << " seed " << seed
            << ": mean_l1_synthetic=" << fmt_double(series.mean_synthetic())
            << " mean_l1_random=" << fmt_double(series.mean_random()) << "\n";
    }
}

} // namespace fedbkd
