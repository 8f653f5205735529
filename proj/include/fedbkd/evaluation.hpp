#pragma once

#include <cstdint>
#include <vector>

#include "fedbkd/dataset.hpp"
#include "fedbkd/model.hpp"
#include "fedbkd/protocol.hpp"

namespace fedbkd {

// Mean over the last `window` rounds of the per-round mean client test
// accuracy. Throws InputError when the history is shorter than the window.
double personalization_score(const std::vector<RoundReport>& history, std::size_t window = 10);

struct FineTuneConfig {
    std::size_t epochs = 10;
    SGDConfig sgd; // lr 0.01; batch size from the main config
    std::uint64_t seed = 0;
};

// For each of exactly 5 global checkpoints: freeze the representation,
// fine-tune the classification head on the new client's train split, measure
// test accuracy; returns the mean over checkpoints. When federation_rows is
// given, any overlap with the new client's rows raises ProtocolError.
double generalization_score(const std::vector<LayeredModel>& checkpoints,
                            const ClientDataset& new_client, const FineTuneConfig& cfg,
                            const std::vector<std::size_t>* federation_rows = nullptr);

// Per-batch L1 distances between mean logits of each probe source and the real
// data, all passed through the same model.
struct LogitDistanceSeries {
    std::vector<double> synthetic_vs_real;
    std::vector<double> random_vs_real;

    double mean_synthetic() const;
    double mean_random() const;
};

// Slices each source into equally many `batch_size` batches (last one may be
// short), averages logits per batch, and records L1 distances to the real
// series. Throws InputError when batch counts differ or any source is empty.
LogitDistanceSeries logit_l1_diagnostic(const LayeredModel& global_model,
                                        const Matrix& synthetic, const Matrix& random_inputs,
                                        const LabeledDataset& real, std::size_t batch_size);

// Hidden-layer activations for external plotting; pure.
std::vector<Matrix> representation_dump(const LayeredModel& model, const Matrix& inputs);

} // namespace fedbkd
