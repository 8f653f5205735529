#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "fedbkd/matrix.hpp"

namespace fedbkd {

struct LabeledDataset {
    Matrix features;          // n x d
    std::vector<int> labels;  // values in [0, class_count)
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
    void validate() const;
};

struct PartitionSpec {
    std::size_t client_count = 20; // M
    int classes_per_client = 2;    // S
    enum class Allocation { Equal, Lognormal };
    Allocation allocation = Allocation::Equal;
    double lognormal_sigma = 0.5;  // unanchored default; config knob
    double mean_samples = 0.0;     // 0 = dataset size / client count
    std::uint64_t seed = 0;

    void validate(int class_count) const;
};

struct ClientDataset {
    std::size_t client_id = 0;
    LabeledDataset train;
    LabeledDataset test;
    std::vector<int> class_set;            // sorted labels present
    std::vector<std::size_t> train_rows;   // provenance: rows of the source dataset
    std::vector<std::size_t> test_rows;
};

// C isotropic unit-variance Gaussians at seeded means with pairwise mean
// distance >= separation. Rows are class-major; deterministic given the seed.
LabeledDataset make_gaussian_benchmark(int class_count, std::size_t dim,
                                       std::size_t samples_per_class, double separation,
                                       std::uint64_t seed);

// Label-shard partition: each client draws samples from exactly S distinct
// classes (fewer only when classes are exhausted); client sample sets are
// pairwise disjoint; per-client 80/20 train/test split stratified by class.
std::vector<ClientDataset> partition_by_shards(const LabeledDataset& dataset,
                                               const PartitionSpec& spec);

// Per-client sample counts with lognormal spread around mean_samples.
std::vector<std::size_t> lognormal_counts(std::size_t client_count, double mean_samples,
                                          double sigma, std::uint64_t seed);

struct HoldoutResult {
    ClientDataset client;                    // rows index the original dataset
    LabeledDataset remaining;
    std::vector<std::size_t> remaining_rows; // remaining row -> original row
};

// Carve one extra client out of the dataset using the same S-class sharding
// rule; its samples are excluded from the remainder handed to the federation.
HoldoutResult holdout_client(const LabeledDataset& dataset, const PartitionSpec& spec);

// Columnar text round-trip: header "C d", then one row per sample,
// label followed by features.
void export_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset import_dataset(const std::filesystem::path& path);

} // namespace fedbkd
