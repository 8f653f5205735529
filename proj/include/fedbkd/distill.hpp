#pragma once

#include <cstdint>
#include <vector>

#include "fedbkd/generator.hpp"
#include "fedbkd/model.hpp"

namespace fedbkd {

struct DistillConfig {
    std::size_t epochs_global_to_local = 4;
    std::size_t epochs_local_to_global = 1;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    std::uint64_t client_order_seed = 0; // orders clients in the local-to-global pass

    void validate() const;
};

// Client model learns from the global model on the client's synthetic batch:
// minibatch SGD on KL(softmax(student) || softmax(teacher)) with the student's
// classification head frozen, epochs_global_to_local passes in fixed batch
// order. The teacher is read-only. Returns the updated client model; kl_out,
// when given, receives the full-batch KL after the final pass. Throws
// InputError on architecture mismatch or an empty batch.
LayeredModel distill_global_to_local(const LayeredModel& client_model,
                                     const LayeredModel& global_model,
                                     const SyntheticBatch& data, const DistillConfig& cfg,
                                     double* kl_out = nullptr);

struct DistillPair {
    const LayeredModel* teacher = nullptr;  // client model
    const SyntheticBatch* data = nullptr;   // that client's synthetic batch
};

// Global model learns from each client in turn on that client's synthetic
// batch, epochs_local_to_global passes per client, completing each client
// before the next. Client visit order is shuffled by a seed derived from
// (cfg.client_order_seed, round). The global head stays frozen; client models
// are read-only. kl_out, when given, receives the mean over clients of the
// full-batch KL measured after that client's passes.
LayeredModel distill_local_to_global(const LayeredModel& global_model,
                                     const std::vector<DistillPair>& pairs,
                                     const DistillConfig& cfg, std::uint64_t round,
                                     double* kl_out = nullptr);

} // namespace fedbkd
