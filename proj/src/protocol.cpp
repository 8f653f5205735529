#include "fedbkd/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

bool communicates(StrategyId s) { return s != StrategyId::local_only; }

// fedavg and local_only train the whole model; the rest use the split rule.
bool full_model_local(StrategyId s) {
    return s == StrategyId::fedavg || s == StrategyId::local_only;
}

bool trains_generator(StrategyId s) {
    return s == StrategyId::fedbkd || s == StrategyId::abl_g2l_only ||
           s == StrategyId::abl_l2g_only;
}

bool uses_synthetic(StrategyId s) {
    return trains_generator(s) || s == StrategyId::abl_random_syn;
}

bool distills_l2g(StrategyId s) {
    return s == StrategyId::fedbkd || s == StrategyId::abl_random_syn ||
           s == StrategyId::abl_l2g_only;
}

bool distills_g2l(StrategyId s) {
    return s == StrategyId::fedbkd || s == StrategyId::abl_random_syn ||
           s == StrategyId::abl_g2l_only;
}

} // namespace

StrategyId parse_strategy(const std::string& name) {
    for (StrategyId s : all_strategies())
        if (to_string(s) == name) return s;
    throw ConfigError("unknown strategy '" + name + "'");
}

std::string to_string(StrategyId id) {
    switch (id) {
        case StrategyId::fedbkd: return "fedbkd";
        case StrategyId::fedavg: return "fedavg";
        case StrategyId::fedrep: return "fedrep";
        case StrategyId::local_only: return "local_only";
        case StrategyId::abl_random_syn: return "abl_random_syn";
        case StrategyId::abl_no_distill: return "abl_no_distill";
        case StrategyId::abl_g2l_only: return "abl_g2l_only";
        case StrategyId::abl_l2g_only: return "abl_l2g_only";
    }
    throw ConfigError("unknown strategy id");
}

const std::vector<StrategyId>& all_strategies() {
    static const std::vector<StrategyId> ids = {
        StrategyId::fedbkd,        StrategyId::fedavg,       StrategyId::fedrep,
        StrategyId::local_only,    StrategyId::abl_random_syn,
        StrategyId::abl_no_distill, StrategyId::abl_g2l_only, StrategyId::abl_l2g_only,
    };
    return ids;
}

void FedConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds must be at least 1");
    if (!(participation > 0.0) || participation > 1.0)
        throw ConfigError("participation must lie in (0, 1]");
    if (head_epochs < 1) throw ConfigError("head_epochs must be at least 1");
    local.validate();
    distill.validate();
    generator.validate();
}

std::vector<std::size_t> sample_clients(std::size_t client_count, double participation,
                                        std::uint64_t round_seed) {
    if (client_count < 1) throw InputError("need at least one client");
    if (!(participation > 0.0) || participation > 1.0)
        throw InputError("participation must lie in (0, 1]");
    // tiny slack keeps e.g. 0.3 * 10 from flooring to 2
    auto m = static_cast<std::size_t>(participation * static_cast<double>(client_count) + 1e-9);
    m = std::clamp<std::size_t>(m, 1, client_count);
    Rng rng(round_seed);
    auto ids = rng.sample_without_replacement(client_count, m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

LayeredModel client_init(const LayeredModel& client_model, const LayeredModel& global_model) {
    if (!client_model.params.same_architecture(global_model.params))
        throw InputError("client and global architectures differ");
    LayeredModel out = client_model;
    out.params = replace_representation(client_model.params, global_model.params,
                                        client_model.partition);
    return out;
}

LocalUpdateResult client_local_update(const LayeredModel& model, const ClientDataset& data,
                                      std::size_t head_epochs, const SGDConfig& sgd,
                                      std::uint64_t seed) {
    if (data.train.size() == 0) throw InputError("client training set is empty");
    sgd.validate();
    LocalUpdateResult out;
    out.model = model;
    Rng rng(derive_seed(seed, "local"));
    for (std::size_t e = 0; e < head_epochs; ++e)
        out.epoch_losses.push_back(sgd_cross_entropy_epoch(
            out.model, data.train.features, data.train.labels,
            model.partition.classification_keys, sgd.learning_rate, sgd.batch_size, rng));
    out.epoch_losses.push_back(sgd_cross_entropy_epoch(
        out.model, data.train.features, data.train.labels,
        model.partition.representation_keys, sgd.learning_rate, sgd.batch_size, rng));
    return out;
}

LocalUpdateResult local_update_full(const LayeredModel& model, const ClientDataset& data,
                                    std::size_t epochs, const SGDConfig& sgd,
                                    std::uint64_t seed) {
    if (data.train.size() == 0) throw InputError("client training set is empty");
    sgd.validate();
    LocalUpdateResult out;
    out.model = model;
    const KeySet keys = all_keys(model);
    Rng rng(derive_seed(seed, "local"));
    for (std::size_t e = 0; e < epochs; ++e)
        out.epoch_losses.push_back(sgd_cross_entropy_epoch(
            out.model, data.train.features, data.train.labels, keys, sgd.learning_rate,
            sgd.batch_size, rng));
    return out;
}

ParamSet aggregate(const std::vector<const ParamSet*>& models) {
    return mean_paramsets(models);
}

namespace {

SyntheticBatch random_synthetic(const ClientState& cs, const GenTrainConfig& gen,
                                std::uint64_t seed) {
    SyntheticBatch batch;
    batch.source_client_id = cs.client_id;
    batch.feature_layer = gen.inject_layer;
    const std::size_t width = cs.model.arch.widths[gen.inject_layer];
    batch.inputs = Matrix(gen.count, width);
    Rng rng(seed);
    for (double& v : batch.inputs.data) v = rng.normal();
    batch.pseudo_labels = pseudo_labels(cs.model, batch.inputs, gen.inject_layer);
    return batch;
}

double mean_train_loss(const LayeredModel& model, const std::vector<ClientState>& clients,
                       const std::vector<std::size_t>& ids) {
    double loss_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t id : ids) {
        const LabeledDataset& train = clients[id].data.train;
        if (train.size() == 0) continue;
        const Matrix logits = forward(model, train.features);
        loss_sum += cross_entropy(logits, train.labels) * static_cast<double>(train.size());
        n += train.size();
    }
    return n == 0 ? kNan : loss_sum / static_cast<double>(n);
}

} // namespace

RoundReport run_round(ServerState& server, std::vector<ClientState>& clients,
                      const FedConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    FedConfig checked = cfg;
    checked.rounds = std::max<std::size_t>(cfg.rounds, 1); // a round in flight ignores the total
    checked.validate();
    if (clients.empty()) throw ProtocolError("federation has no clients");
    const StrategyId strat = server.strategy;
    const std::uint64_t master = server.master_seed;

    RoundReport report;
    report.round = server.round + 1;
    report.aggregation_loss = kNan;
    report.g2l_kl = kNan;
    report.l2g_kl = kNan;
    report.generator_loss_mean = kNan;

    report.sampled = sample_clients(clients.size(), cfg.participation,
                                    derive_seed(master, "sample", report.round));

    // local updates; clients without training data sit the round out
    std::vector<std::size_t> active;
    for (std::size_t id : report.sampled) {
        ClientState& cs = clients[id];
        if (cs.data.train.size() == 0) {
            std::fprintf(stderr, "warning: round %zu: client %zu has no training data, skipped\n",
                         report.round, id);
            continue;
        }
        LayeredModel start = cs.model;
        if (communicates(strat)) {
            if (strat == StrategyId::fedavg)
                start.params = server.global_model.params; // full-model broadcast
            else
                start = client_init(cs.model, server.global_model);
        }
        const std::uint64_t seed = derive_seed(master, "localupdate", report.round, id);
        LocalUpdateResult updated =
            full_model_local(strat)
                ? local_update_full(start, cs.data, cfg.head_epochs + 1, cfg.local, seed)
                : client_local_update(start, cs.data, cfg.head_epochs, cfg.local, seed);
        cs.model = std::move(updated.model);
        cs.last_sampled_round = report.round;
        active.push_back(id);
    }

    // synthetic data per active client
    std::map<std::size_t, SyntheticBatch> batches;
    if (uses_synthetic(strat)) {
        for (std::size_t id : active) {
            if (trains_generator(strat)) {
                GenTrainResult r = train_generator(clients[id].model, cfg.generator,
                                                   derive_seed(master, "gen", report.round, id),
                                                   id);
                report.generator_loss.push_back(r.final_loss);
                batches.emplace(id, std::move(r.batch));
            } else {
                batches.emplace(id, random_synthetic(clients[id], cfg.generator,
                                                     derive_seed(master, "randsyn",
                                                                 report.round, id)));
            }
        }
        if (!report.generator_loss.empty()) {
            double s = 0.0;
            for (double v : report.generator_loss) s += v;
            report.generator_loss_mean = s / static_cast<double>(report.generator_loss.size());
        }
    }

    // aggregation
    if (communicates(strat) && !active.empty()) {
        std::vector<const ParamSet*> parts;
        parts.reserve(active.size());
        for (std::size_t id : active) parts.push_back(&clients[id].model.params);
        ParamSet mean = aggregate(parts);
        if (strat == StrategyId::fedrep)
            server.global_model.params = replace_representation(
                server.global_model.params, mean, server.global_model.partition);
        else
            server.global_model.params = std::move(mean);
        report.aggregation_loss = mean_train_loss(server.global_model, clients, active);
    }

    // bidirectional distillation; the freshly distilled global is the live
    // teacher for the global-to-local step
    if (!active.empty() && uses_synthetic(strat)) {
        if (distills_l2g(strat)) {
            std::vector<DistillPair> pairs;
            pairs.reserve(active.size());
            for (std::size_t id : active)
                pairs.push_back({&clients[id].model, &batches.at(id)});
            double kl = 0.0;
            server.global_model = distill_local_to_global(server.global_model, pairs,
                                                          cfg.distill, report.round, &kl);
            report.l2g_kl = kl;
        }
        if (distills_g2l(strat)) {
            double kl_sum = 0.0;
            for (std::size_t id : active) {
                double kl = 0.0;
                clients[id].model = distill_global_to_local(
                    clients[id].model, server.global_model, batches.at(id), cfg.distill, &kl);
                kl_sum += kl;
            }
            report.g2l_kl = kl_sum / static_cast<double>(active.size());
        }
    }

    // per-client evaluation over every client, sampled or not
    report.client_accuracy.resize(clients.size(), kNan);
    double acc_sum = 0.0;
    std::size_t acc_n = 0;
    for (std::size_t id = 0; id < clients.size(); ++id) {
        const LabeledDataset& test = clients[id].data.test;
        if (test.size() == 0) continue;
        const double acc = accuracy(clients[id].model, test.features, test.labels);
        report.client_accuracy[id] = acc;
        acc_sum += acc;
        ++acc_n;
    }
    if (acc_n == 0) throw ProtocolError("no client has test data");
    report.mean_client_accuracy = acc_sum / static_cast<double>(acc_n);

    report.uploads = communicates(strat) ? active.size() : 0;
    report.downloads = report.uploads;

    server.round = report.round;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

FederationResult run_federation(StrategyId strategy, const FedConfig& cfg,
                                const std::vector<ClientDataset>& datasets) {
    FedConfig checked = cfg;
    checked.rounds = std::max<std::size_t>(cfg.rounds, 1); // zero rounds is a valid no-op run
    checked.validate();
    if (datasets.empty()) throw ProtocolError("federation needs at least one client dataset");
    const std::size_t dim = datasets[0].train.dim();
    const int classes = datasets[0].train.class_count;

    FederationResult out;
    out.server.master_seed = cfg.master_seed;
    out.server.strategy = strategy;
    out.server.global_model = LayeredModel::init(Architecture::classifier(dim, static_cast<std::size_t>(classes)),
                                                 derive_seed(cfg.master_seed, "init.global"));
    out.clients.reserve(datasets.size());
    for (const ClientDataset& d : datasets) {
        ClientState cs;
        cs.client_id = d.client_id;
        cs.model = out.server.global_model;
        cs.data = d;
        out.clients.push_back(std::move(cs));
    }
    for (std::size_t i = 0; i < out.clients.size(); ++i)
        if (out.clients[i].client_id != i)
            throw ProtocolError("client datasets must be ordered by id");

    out.history.reserve(cfg.rounds);
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        out.history.push_back(run_round(out.server, out.clients, cfg));
        out.last_global_checkpoints.push_back(out.server.global_model);
        if (out.last_global_checkpoints.size() > 5)
            out.last_global_checkpoints.erase(out.last_global_checkpoints.begin());
    }
    return out;
}

} // namespace fedbkd
