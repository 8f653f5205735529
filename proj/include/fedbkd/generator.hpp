#pragma once

#include <cstdint>
#include <vector>

#include "fedbkd/matrix.hpp"
#include "fedbkd/model.hpp"

namespace fedbkd {

// Standard-normal latent vectors, one per row.
struct NoiseBatch {
    Matrix vectors; // n x noise_dim
    std::uint64_t seed = 0;
};

NoiseBatch sample_noise(std::size_t count, std::size_t noise_dim, std::uint64_t seed);

// Generator outputs labeled by the discriminator's argmax.
struct SyntheticBatch {
    Matrix inputs;
    std::vector<int> pseudo_labels;
    std::size_t source_client_id = 0;
    std::size_t feature_layer = 0; // discriminator layer the inputs feed into
};

struct GenTrainConfig {
    std::size_t count = 200;        // synthetic samples per client per round
    double diversity_weight = 1.0;  // weight on the multi-sample spread term
    std::size_t epochs = 6;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t noise_dim = 16;
    double init_scale = 3.0;        // weight multiplier at init; see init_generator
    std::size_t inject_layer = 0;   // 0 = synthesize raw inputs

    void validate() const;
};

// Forward pass of the generator over a noise batch. Throws InputError when the
// noise dimension does not match the generator input.
Matrix generate(const LayeredModel& generator, const NoiseBatch& noise);

// Argmax labels from the discriminator, ties broken by lowest class index.
// `from_layer` selects the discriminator layer the inputs feed into.
std::vector<int> pseudo_labels(const LayeredModel& discriminator, const Matrix& inputs,
                               std::size_t from_layer = 0);

// Mean cross-entropy of the discriminator's outputs against their own argmax;
// zero exactly when every output is saturated one-hot.
double loss_oh(const LayeredModel& discriminator, const Matrix& inputs,
               std::size_t from_layer = 0);

// -|G(ra) - G(rb)| / |ra - rb|; more negative means more diverse outputs.
// Throws InputError when ra == rb.
double loss_ms(const LayeredModel& generator, const std::vector<double>& ra,
               const std::vector<double>& rb);

// Full objective L_oh + diversity_weight * L_ms on a fixed noise set, pairing
// consecutive rows (2k, 2k+1). Evaluation only, no shuffling.
double generator_objective(const LayeredModel& generator, const LayeredModel& discriminator,
                           const NoiseBatch& noise, const GenTrainConfig& cfg);

// Fresh generator sized for the discriminator layer given by cfg.inject_layer.
LayeredModel init_generator(const LayeredModel& discriminator, const GenTrainConfig& cfg,
                            std::uint64_t seed);

struct GenTrainResult {
    LayeredModel generator;
    SyntheticBatch batch;    // sampled from the final generator
    double final_loss = 0.0; // objective over the last epoch
};

// Trains a fresh generator against the frozen discriminator for cfg.epochs and
// returns it with a synthetic batch of cfg.count samples. The discriminator is
// never modified. Throws TrainingDivergenceError when the loss leaves the
// finite range, carrying the epoch index.
GenTrainResult train_generator(const LayeredModel& discriminator, const GenTrainConfig& cfg,
                               std::uint64_t seed, std::size_t client_id = 0);

// Same training loop on an existing generator and caller-owned noise pool.
// Returns the mean objective over the final epoch.
double train_generator_in_place(LayeredModel& generator, const LayeredModel& discriminator,
                                const NoiseBatch& pool, const GenTrainConfig& cfg,
                                std::uint64_t seed);

// Synthetic inputs pooled from `pool` independently seeded generators, cfg.count
// rows total, mirroring the fresh per-client generators of a federation round.
// A single generator tends to cover only a few of the discriminator's classes;
// the pool is what the protocol actually produces. Probe k trains under
// derive_seed(seed, "pool", k) with client id k.
Matrix pooled_synthetic_inputs(const LayeredModel& discriminator, GenTrainConfig cfg,
                               std::uint64_t seed, std::size_t pool);

} // namespace fedbkd
