#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedbkd/matrix.hpp"
#include "fedbkd/paramset.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

// Dense feed-forward architecture: widths[0] inputs, widths.back() outputs,
// tanh on hidden layers, raw affine logits. The final layer is always the
// classification head; everything before it is the representation.
struct Architecture {
    std::vector<std::size_t> widths;
    std::string hidden_activation = "tanh";

    std::size_t input_dim() const { return widths.front(); }
    std::size_t output_dim() const { return widths.back(); }
    std::size_t layer_count() const { return widths.size() - 1; }

    std::string weight_key(std::size_t layer) const;
    std::string bias_key(std::size_t layer) const;

    // One-line text record stored in checkpoints, e.g. "mlp 20 64 32 5 tanh".
    std::string descriptor() const;
    static Architecture from_descriptor(const std::string& text);

    void validate() const;

    // d -> 64 -> 32 -> C classifier; the 32 -> C layer is the head.
    static Architecture classifier(std::size_t input_dim, std::size_t class_count);
    // noise_dim -> 64 -> 64 -> output_dim generator.
    static Architecture generator(std::size_t noise_dim, std::size_t output_dim);
};

struct SGDConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 10;

    void validate() const;
};

// Classifier (or generator) with its parameter partition.
struct LayeredModel {
    Architecture arch;
    ParamSet params;
    LayerPartition partition;

    // Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights
    // and biases, drawn in layer order, weights row-major first.
    static LayeredModel init(const Architecture& arch, std::uint64_t seed);
    static LayeredModel zeros(const Architecture& arch);
};

// --- forward ---------------------------------------------------------------

// Logits for a batch; rows preserved. Throws InputError on dimension mismatch.
Matrix forward(const LayeredModel& model, const Matrix& inputs);

// Forward starting at layer `from_layer` (0 = full network); `inputs` must
// match that layer's input width. Used for feature-space synthetic data.
Matrix forward_from(const LayeredModel& model, std::size_t from_layer, const Matrix& inputs);

// Activations entering the classification head.
Matrix representation(const LayeredModel& model, const Matrix& inputs);

// Per-layer activations of the representation stack (post-tanh), for dumps.
std::vector<Matrix> representation_activations(const LayeredModel& model, const Matrix& inputs);

// --- losses ----------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);
// d(mean cross-entropy)/d(logits) = (softmax - onehot) / batch.
Matrix cross_entropy_grad(const Matrix& logits, const std::vector<int>& labels);

// Mean over the batch of KL(softmax(p_logits) || softmax(q_logits)).
double kl_divergence(const Matrix& p_logits, const Matrix& q_logits);
// Gradient with respect to p_logits (the student side in both distillation
// directions); q is treated as constant.
Matrix kl_divergence_grad(const Matrix& p_logits, const Matrix& q_logits);

Matrix softmax(const Matrix& logits);

// --- backward --------------------------------------------------------------

struct Gradients {
    ParamSet params;   // entries for exactly the trainable keys
    Matrix inputs;     // dLoss/dInputs at the entry layer
};

struct LossGrad {
    double value = 0.0;
    Matrix dlogits; // mean-reduced gradient w.r.t. logits
};

using LossFn = std::function<LossGrad(const Matrix& logits)>;

// Backprop of a mean-reduced logit gradient. Gradients exist for exactly
// `trainable_keys`; throws InputError when the set is empty or has unknown keys.
Gradients backward(const LayeredModel& model, const Matrix& inputs,
                   const Matrix& dlogits, const KeySet& trainable_keys);

Gradients backward_from(const LayeredModel& model, std::size_t from_layer,
                        const Matrix& inputs, const Matrix& dlogits,
                        const KeySet& trainable_keys);

// Convenience overload: evaluates `loss` on forward(model, inputs) and
// backpropagates its logit gradient.
Gradients backward(const LayeredModel& model, const Matrix& inputs,
                   const LossFn& loss, const KeySet& trainable_keys);

// dLoss/dInputs only, no parameter gradients; the frozen-discriminator path of
// generator training.
Matrix input_gradient(const LayeredModel& model, std::size_t from_layer,
                      const Matrix& inputs, const Matrix& dlogits);

// --- training helpers --------------------------------------------------------

// One epoch of minibatch SGD on cross-entropy over (X, y), updating only
// `trainable_keys`. Returns the mean loss over samples (pre-update, per batch).
double sgd_cross_entropy_epoch(LayeredModel& model, const Matrix& X,
                               const std::vector<int>& y, const KeySet& trainable_keys,
                               double learning_rate, std::size_t batch_size, Rng& rng);

// Accuracy of argmax predictions on a labeled batch.
double accuracy(const LayeredModel& model, const Matrix& X, const std::vector<int>& y);

KeySet all_keys(const LayeredModel& model);

} // namespace fedbkd
