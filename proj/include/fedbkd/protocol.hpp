#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedbkd/dataset.hpp"
#include "fedbkd/distill.hpp"
#include "fedbkd/generator.hpp"
#include "fedbkd/model.hpp"

namespace fedbkd {

enum class StrategyId {
    fedbkd,
    fedavg,
    fedrep,
    local_only,
    abl_random_syn, // synthetic batches replaced by standard-normal noise
    abl_no_distill, // both distillation directions skipped
    abl_g2l_only,   // local-to-global distillation skipped
    abl_l2g_only,   // global-to-local distillation skipped
};

StrategyId parse_strategy(const std::string& name); // ConfigError on unknown name
std::string to_string(StrategyId id);
const std::vector<StrategyId>& all_strategies();

struct ClientState {
    std::size_t client_id = 0;
    LayeredModel model;
    ClientDataset data;
    std::size_t last_sampled_round = 0; // 1-based; 0 = never sampled
};

struct ServerState {
    LayeredModel global_model;
    std::size_t round = 0; // completed rounds
    std::uint64_t master_seed = 0;
    StrategyId strategy = StrategyId::fedbkd;
};

struct FedConfig {
    std::size_t rounds = 100;
    double participation = 0.1; // fraction of clients sampled per round
    std::size_t head_epochs = 10; // head-only epochs before the representation epoch
    SGDConfig local;              // lr 0.01 batch 10
    DistillConfig distill;
    GenTrainConfig generator;
    std::uint64_t master_seed = 0;

    void validate() const;
};

struct RoundReport {
    std::size_t round = 0;                // 1-based
    std::vector<std::size_t> sampled;     // ascending client ids
    std::vector<double> client_accuracy;  // all clients; NaN when a test set is empty
    double mean_client_accuracy = 0.0;
    double aggregation_loss = 0.0;        // NaN when the strategy does not aggregate
    double g2l_kl = 0.0;                  // NaN when the direction is skipped
    double l2g_kl = 0.0;
    std::vector<double> generator_loss;   // per sampled client, in sampled order
    double generator_loss_mean = 0.0;     // NaN when no generator runs
    std::size_t uploads = 0;
    std::size_t downloads = 0;
    double seconds = 0.0; // wall clock; excluded from deterministic outputs
};

// max(floor(participation * client_count), 1) distinct ids, ascending,
// uniform without replacement, deterministic per round_seed.
std::vector<std::size_t> sample_clients(std::size_t client_count, double participation,
                                        std::uint64_t round_seed);

// Representation layers from the global model, classification head kept local.
LayeredModel client_init(const LayeredModel& client_model, const LayeredModel& global_model);

struct LocalUpdateResult {
    LayeredModel model;
    std::vector<double> epoch_losses; // head epochs then the representation epoch
};

// head_epochs of head-only SGD with the representation frozen, then one
// representation-only epoch with the head frozen. Throws InputError on an
// empty training set.
LocalUpdateResult client_local_update(const LayeredModel& model, const ClientDataset& data,
                                      std::size_t head_epochs, const SGDConfig& sgd,
                                      std::uint64_t seed);

// Plain SGD over all parameters for `epochs` epochs; the fedavg and local-only
// update rule.
LocalUpdateResult local_update_full(const LayeredModel& model, const ClientDataset& data,
                                    std::size_t epochs, const SGDConfig& sgd,
                                    std::uint64_t seed);

// Element-wise parameter mean in deterministic order.
ParamSet aggregate(const std::vector<const ParamSet*>& models);

// One communication round, dispatching on server.strategy; mutates the server
// and the sampled clients, leaves every unsampled client bit-identical.
RoundReport run_round(ServerState& server, std::vector<ClientState>& clients,
                      const FedConfig& cfg);

struct FederationResult {
    std::vector<RoundReport> history;
    ServerState server;
    std::vector<ClientState> clients;
    std::vector<LayeredModel> last_global_checkpoints; // up to 5, oldest first
};

// cfg.rounds rounds over clients built from the given partitions. All clients
// start from the seeded global model; fully deterministic given cfg seeds.
FederationResult run_federation(StrategyId strategy, const FedConfig& cfg,
                                const std::vector<ClientDataset>& datasets);

} // namespace fedbkd
