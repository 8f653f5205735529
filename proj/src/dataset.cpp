#include "fedbkd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

void LabeledDataset::validate() const {
    if (labels.empty()) throw InputError("dataset is empty");
    if (features.rows != labels.size())
        throw InputError("feature rows (" + std::to_string(features.rows) +
                         ") do not match label count (" + std::to_string(labels.size()) + ")");
    if (class_count < 1) throw InputError("class_count must be positive");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count)
            throw InputError("label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " outside [0, " +
                             std::to_string(class_count) + ")");
    }
    if (!features.all_finite()) throw InputError("dataset features contain non-finite values");
}

void PartitionSpec::validate(int class_count) const {
    if (client_count < 1) throw ConfigError("client_count must be at least 1");
    if (classes_per_client < 1 || classes_per_client > class_count)
        throw ConfigError("classes_per_client must lie in [1, " +
                          std::to_string(class_count) + "], got " +
                          std::to_string(classes_per_client));
    if (lognormal_sigma < 0.0) throw ConfigError("lognormal_sigma must be non-negative");
    if (mean_samples < 0.0) throw ConfigError("mean_samples must be non-negative");
}

LabeledDataset make_gaussian_benchmark(int class_count, std::size_t dim,
                                       std::size_t samples_per_class, double separation,
                                       std::uint64_t seed) {
    if (class_count < 2) throw ConfigError("need at least 2 classes");
    if (dim < 2) throw ConfigError("need at least 2 feature dimensions");
    if (samples_per_class < 1) throw ConfigError("need at least 1 sample per class");
    if (!(separation > 0.0)) throw ConfigError("separation must be positive");

    // Means are a seeded standard-normal constellation rescaled so the closest
    // pair sits exactly at `separation`; the knob then controls the Bayes error
    // of the hardest class pair instead of vanishing in high dimensions.
    Rng mean_rng(derive_seed(seed, "bench.means"));
    std::vector<std::vector<double>> means;
    const std::size_t max_attempts = 1000;
    double min_dist = 0.0;
    for (std::size_t attempt = 0; attempt < max_attempts && min_dist <= 0.0; ++attempt) {
        means.assign(static_cast<std::size_t>(class_count), std::vector<double>(dim));
        for (auto& m : means)
            for (auto& v : m) v = mean_rng.normal();
        min_dist = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < means.size(); ++a)
            for (std::size_t b = a + 1; b < means.size(); ++b)
                min_dist = std::min(min_dist,
                                    euclidean_distance(means[a].data(), means[b].data(), dim));
        if (!std::isfinite(min_dist)) min_dist = 0.0;
    }
    if (min_dist <= 0.0)
        throw InputError("could not place " + std::to_string(class_count) +
                         " distinct class means");
    const double scale = separation / min_dist;
    for (auto& m : means)
        for (auto& v : m) v *= scale;

    LabeledDataset out;
    out.class_count = class_count;
    out.features = Matrix(static_cast<std::size_t>(class_count) * samples_per_class, dim);
    out.labels.resize(out.features.rows);
    std::size_t row = 0;
    for (int c = 0; c < class_count; ++c) {
        Rng sample_rng(derive_seed(seed, "bench.samples", static_cast<std::uint64_t>(c)));
        for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
            for (std::size_t j = 0; j < dim; ++j)
                out.features(row, j) = means[static_cast<std::size_t>(c)][j] + sample_rng.normal();
            out.labels[row] = c;
        }
    }
    return out;
}

std::vector<std::size_t> lognormal_counts(std::size_t client_count, double mean_samples,
                                          double sigma, std::uint64_t seed) {
    if (client_count < 1) throw ConfigError("client_count must be at least 1");
    if (mean_samples < 1.0) throw ConfigError("mean_samples must be at least 1");
    if (sigma < 0.0) throw ConfigError("sigma must be non-negative");

    std::vector<std::size_t> counts(client_count);
    if (sigma == 0.0) {
        const auto each = static_cast<std::size_t>(std::llround(mean_samples));
        std::fill(counts.begin(), counts.end(), std::max<std::size_t>(each, 1));
        return counts;
    }
    const double mu = std::log(mean_samples) - 0.5 * sigma * sigma;
    Rng rng(derive_seed(seed, "lognormal"));
    for (auto& c : counts) {
        const double draw = std::exp(mu + sigma * rng.normal());
        c = std::max<std::size_t>(static_cast<std::size_t>(std::llround(draw)), 1);
    }
    return counts;
}

namespace {

// Per-class row pools, each shuffled by a seed derived from (seed, tag, class).
std::vector<std::vector<std::size_t>> shuffled_class_pools(const LabeledDataset& dataset,
                                                           std::uint64_t seed,
                                                           std::string_view tag) {
    std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t i = 0; i < dataset.size(); ++i)
        pools[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
    for (std::size_t c = 0; c < pools.size(); ++c) {
        Rng rng(derive_seed(seed, tag, c));
        rng.shuffle(pools[c]);
    }
    return pools;
}

// Deal exactly S distinct classes to each of M clients. Greedy max-remaining
// keeps the deal feasible whenever S <= C; ties follow a seeded class order.
std::vector<std::vector<int>> deal_classes(int class_count, std::size_t client_count,
                                           int classes_per_client, std::uint64_t seed) {
    const std::size_t C = static_cast<std::size_t>(class_count);
    const std::size_t total = client_count * static_cast<std::size_t>(classes_per_client);
    std::vector<std::size_t> remaining(C, total / C);
    std::size_t leftover = total % C;

    std::vector<std::size_t> tie_rank(C);
    std::iota(tie_rank.begin(), tie_rank.end(), 0);
    Rng rng(derive_seed(seed, "part.deal"));
    rng.shuffle(tie_rank);
    std::vector<std::size_t> rank_of(C);
    for (std::size_t i = 0; i < C; ++i) rank_of[tie_rank[i]] = i;
    for (std::size_t i = 0; i < C && leftover > 0; ++i, --leftover) ++remaining[tie_rank[i]];

    std::vector<int> order(class_count);
    std::iota(order.begin(), order.end(), 0);

    std::vector<std::vector<int>> assigned(client_count);
    for (std::size_t m = 0; m < client_count; ++m) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const auto ra = remaining[static_cast<std::size_t>(a)];
            const auto rb = remaining[static_cast<std::size_t>(b)];
            if (ra != rb) return ra > rb;
            return rank_of[static_cast<std::size_t>(a)] < rank_of[static_cast<std::size_t>(b)];
        });
        for (int s = 0; s < classes_per_client; ++s) {
            const int c = order[static_cast<std::size_t>(s)];
            if (remaining[static_cast<std::size_t>(c)] == 0)
                throw PartitionError("cannot deal " + std::to_string(classes_per_client) +
                                     " distinct classes to client " + std::to_string(m));
            --remaining[static_cast<std::size_t>(c)];
            assigned[m].push_back(c);
        }
        std::sort(assigned[m].begin(), assigned[m].end());
    }
    return assigned;
}

// Stratified 80/20 split of one client's drawn rows (original indices, grouped
// by class in draw order). Singleton classes go entirely to train.
ClientDataset build_client(const LabeledDataset& dataset, std::size_t client_id,
                           const std::vector<std::pair<int, std::vector<std::size_t>>>& per_class) {
    ClientDataset out;
    out.client_id = client_id;
    for (const auto& [label, rows] : per_class) {
        if (rows.empty()) continue;
        out.class_set.push_back(label);
        std::size_t n_test = rows.size() / 5;
        if (n_test == 0 && rows.size() >= 2) n_test = 1;
        const std::size_t n_train = rows.size() - n_test;
        for (std::size_t i = 0; i < n_train; ++i) out.train_rows.push_back(rows[i]);
        for (std::size_t i = n_train; i < rows.size(); ++i) out.test_rows.push_back(rows[i]);
    }
    std::sort(out.class_set.begin(), out.class_set.end());

    auto slice = [&](const std::vector<std::size_t>& rows) {
        LabeledDataset part;
        part.class_count = dataset.class_count;
        part.features = dataset.features.take_rows(rows);
        part.labels.reserve(rows.size());
        for (auto r : rows) part.labels.push_back(dataset.labels[r]);
        return part;
    };
    out.train = slice(out.train_rows);
    out.test = slice(out.test_rows);
    return out;
}

} // namespace

std::vector<ClientDataset> partition_by_shards(const LabeledDataset& dataset,
                                               const PartitionSpec& spec) {
    dataset.validate();
    spec.validate(dataset.class_count);

    auto pools = shuffled_class_pools(dataset, spec.seed, "part.pool");
    auto assigned = deal_classes(dataset.class_count, spec.client_count,
                                 spec.classes_per_client, spec.seed);

    // Clients holding each class, in client id order; class pools are cut into
    // that many near-equal shards for the equal allocation.
    std::vector<std::vector<std::size_t>> holders(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t m = 0; m < spec.client_count; ++m)
        for (int c : assigned[m]) holders[static_cast<std::size_t>(c)].push_back(m);
    for (std::size_t c = 0; c < holders.size(); ++c) {
        if (!holders[c].empty() && pools[c].size() < holders[c].size())
            throw PartitionError("class " + std::to_string(c) + " has " +
                                 std::to_string(pools[c].size()) + " samples for " +
                                 std::to_string(holders[c].size()) + " shards");
    }

    std::vector<std::vector<std::pair<int, std::vector<std::size_t>>>> draws(spec.client_count);
    for (std::size_t m = 0; m < spec.client_count; ++m)
        for (int c : assigned[m]) draws[m].push_back({c, {}});

    auto draw_into = [&](std::size_t m, int c, std::size_t want,
                         std::vector<std::size_t>& cursor) {
        auto& pool = pools[static_cast<std::size_t>(c)];
        auto& cur = cursor[static_cast<std::size_t>(c)];
        const std::size_t take = std::min(want, pool.size() - cur);
        for (auto& entry : draws[m]) {
            if (entry.first != c) continue;
            for (std::size_t i = 0; i < take; ++i) entry.second.push_back(pool[cur++]);
            break;
        }
        return take;
    };

    std::vector<std::size_t> cursor(static_cast<std::size_t>(dataset.class_count), 0);
    if (spec.allocation == PartitionSpec::Allocation::Equal) {
        for (std::size_t c = 0; c < holders.size(); ++c) {
            if (holders[c].empty()) continue;
            const std::size_t n_shards = holders[c].size();
            const std::size_t base = pools[c].size() / n_shards;
            const std::size_t rem = pools[c].size() % n_shards;
            for (std::size_t k = 0; k < n_shards; ++k)
                draw_into(holders[c][k], static_cast<int>(c), base + (k < rem ? 1 : 0), cursor);
        }
    } else {
        const double mean = spec.mean_samples > 0.0
                                ? spec.mean_samples
                                : static_cast<double>(dataset.size()) /
                                      static_cast<double>(spec.client_count);
        auto targets = lognormal_counts(spec.client_count, mean, spec.lognormal_sigma,
                                        derive_seed(spec.seed, "part.alloc"));
        // every slot gets one row up front so late clients cannot lose an
        // assigned class to pool exhaustion
        for (std::size_t c = 0; c < holders.size(); ++c)
            for (std::size_t m : holders[c]) draw_into(m, static_cast<int>(c), 1, cursor);
        for (std::size_t m = 0; m < spec.client_count; ++m) {
            const std::size_t S = assigned[m].size();
            const std::size_t base = targets[m] / S;
            const std::size_t rem = targets[m] % S;
            std::size_t shortfall = 0;
            for (std::size_t s = 0; s < S; ++s) {
                std::size_t want = std::max<std::size_t>(base + (s < rem ? 1 : 0), 1) - 1;
                shortfall += want - draw_into(m, assigned[m][s], want, cursor);
            }
            for (std::size_t s = 0; s < S && shortfall > 0; ++s)
                shortfall -= draw_into(m, assigned[m][s], shortfall, cursor);
        }
    }

    std::vector<ClientDataset> clients;
    clients.reserve(spec.client_count);
    for (std::size_t m = 0; m < spec.client_count; ++m)
        clients.push_back(build_client(dataset, m, draws[m]));
    return clients;
}

HoldoutResult holdout_client(const LabeledDataset& dataset, const PartitionSpec& spec) {
    dataset.validate();
    spec.validate(dataset.class_count);

    const std::size_t C = static_cast<std::size_t>(dataset.class_count);
    auto pools = shuffled_class_pools(dataset, spec.seed, "holdout.pool");

    Rng class_rng(derive_seed(spec.seed, "holdout.classes"));
    auto picks = class_rng.sample_without_replacement(C, static_cast<std::size_t>(spec.classes_per_client));
    std::vector<int> classes;
    for (auto p : picks) classes.push_back(static_cast<int>(p));
    std::sort(classes.begin(), classes.end());

    const std::size_t share = dataset.size() / (spec.client_count + 1);
    if (share < 2)
        throw PartitionError("dataset too small to carve a holdout client from " +
                             std::to_string(dataset.size()) + " samples");
    const std::size_t S = classes.size();
    std::vector<std::pair<int, std::vector<std::size_t>>> per_class;
    std::size_t taken_total = 0;
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t want = share / S + (s < share % S ? 1 : 0);
        auto& pool = pools[static_cast<std::size_t>(classes[s])];
        const std::size_t take = std::min(want, pool.size());
        per_class.push_back({classes[s],
                             std::vector<std::size_t>(pool.begin(),
                                                      pool.begin() + static_cast<std::ptrdiff_t>(take))});
        taken_total += take;
    }
    if (taken_total < 2)
        throw PartitionError("holdout client would receive fewer than 2 samples");
    if (dataset.size() - taken_total < spec.client_count)
        throw PartitionError("removing the holdout leaves fewer samples than clients");

    HoldoutResult out;
    out.client = build_client(dataset, spec.client_count, per_class);

    std::vector<char> taken(dataset.size(), 0);
    for (const auto& [label, rows] : per_class)
        for (auto r : rows) taken[r] = 1;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (!taken[i]) out.remaining_rows.push_back(i);

    out.remaining.class_count = dataset.class_count;
    out.remaining.features = dataset.features.take_rows(out.remaining_rows);
    out.remaining.labels.reserve(out.remaining_rows.size());
    for (auto r : out.remaining_rows) out.remaining.labels.push_back(dataset.labels[r]);
    return out;
}

void export_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out << dataset.class_count << " " << dataset.dim() << "\n";
    char buf[64];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << dataset.labels[i];
        for (std::size_t j = 0; j < dataset.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", dataset.features(i, j));
            out << " " << buf;
        }
        out << "\n";
    }
    if (!out) throw InputError("write to " + path.string() + " failed");
}

LabeledDataset import_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    LabeledDataset out;
    std::size_t dim = 0;
    std::string header;
    if (!std::getline(in, header)) throw InputError("empty dataset file " + path.string());
    {
        std::istringstream hs(header);
        if (!(hs >> out.class_count >> dim) || out.class_count < 1 || dim < 1)
            throw InputError("bad dataset header in " + path.string());
    }
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int label;
        if (!(ls >> label))
            throw InputError(path.string() + ": line " + std::to_string(line_no) + ": bad label");
        if (label < 0 || label >= out.class_count)
            throw InputError(path.string() + ": line " + std::to_string(line_no) + ": label " +
                             std::to_string(label) + " outside [0, " +
                             std::to_string(out.class_count) + ")");
        out.labels.push_back(label);
        for (std::size_t j = 0; j < dim; ++j) {
            double v;
            if (!(ls >> v))
                throw InputError(path.string() + ": line " + std::to_string(line_no) +
                                 ": expected " + std::to_string(dim) + " features");
            values.push_back(v);
        }
    }
    out.features = Matrix(out.labels.size(), dim);
    out.features.data = std::move(values);
    out.validate();
    return out;
}

} // namespace fedbkd
