#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fedbkd {

// Shaped numeric array, one named parameter of a model.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

// Named, shaped parameter collection: the unit of aggregation, checkpointing
// and distillation. Key order (std::map) fixes every summation order, so
// seeded runs are bit-reproducible.
struct ParamSet {
    std::map<std::string, Tensor> entries;

    bool same_architecture(const ParamSet& other) const;
    bool all_finite() const;
    bool bit_equal(const ParamSet& other) const;

    // FNV-1a over names, shapes and raw value bits; used to assert the
    // freezing contracts cheaply.
    std::uint64_t content_hash() const;
};

using KeySet = std::set<std::string>;

// Split of the parameter names into representation layers and the final
// classification layer.
struct LayerPartition {
    KeySet representation_keys;
    KeySet classification_keys;

    // Keys must cover the ParamSet exactly, with empty intersection.
    bool covers(const ParamSet& params) const;
};

// updated = params - lr * grads on grad keys; other keys bit-identical.
// Throws ConfigError when lr <= 0, InputError when grads has unknown keys or
// mismatched shapes, TrainingDivergenceError-free: non-finite results throw
// InputError since they indicate a diverged gradient.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double learning_rate);

// Element-wise mean over models in deterministic order (key order, then index
// order). Throws InputError on an empty list or mismatched architectures.
ParamSet mean_paramsets(const std::vector<const ParamSet*>& models);

// Output takes source's representation keys and target's classification keys.
ParamSet replace_representation(const ParamSet& target, const ParamSet& source,
                                const LayerPartition& partition);

} // namespace fedbkd
