#include "fedbkd/distill.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

void DistillConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("distill learning rate must be positive");
    if (batch_size < 1) throw ConfigError("distill batch size must be at least 1");
}

namespace {

// Representation keys of layers at or above the batch's entry layer; only
// these receive gradient when distilling on feature-space synthetic data.
KeySet reachable_representation_keys(const LayeredModel& student, std::size_t from_layer) {
    KeySet keys;
    for (std::size_t l = from_layer; l < student.arch.layer_count(); ++l) {
        const std::string w = student.arch.weight_key(l);
        const std::string b = student.arch.bias_key(l);
        if (student.partition.representation_keys.count(w)) keys.insert(w);
        if (student.partition.representation_keys.count(b)) keys.insert(b);
    }
    if (keys.empty())
        throw InputError("no representation layers above entry layer " +
                         std::to_string(from_layer));
    return keys;
}

// `epochs` passes of minibatch SGD on KL(student || teacher) over the batch,
// fixed batch order, head frozen. Returns the full-batch KL after the passes.
double distill_passes(LayeredModel& student, const LayeredModel& teacher,
                      const SyntheticBatch& data, std::size_t epochs, double lr,
                      std::size_t batch_size) {
    const std::size_t from_layer = data.feature_layer;
    const Matrix& X = data.inputs;
    const KeySet trainable = reachable_representation_keys(student, from_layer);
    const Matrix teacher_logits = forward_from(teacher, from_layer, X);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t start = 0; start < X.rows; start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, X.rows);
            std::vector<std::size_t> rows(stop - start);
            std::iota(rows.begin(), rows.end(), start);
            const Matrix bx = X.take_rows(rows);
            const Matrix bt = teacher_logits.take_rows(rows);
            const Matrix logits = forward_from(student, from_layer, bx);
            Gradients g = backward_from(student, from_layer, bx,
                                        kl_divergence_grad(logits, bt), trainable);
            student.params = sgd_step(student.params, g.params, lr);
        }
    }
    return kl_divergence(forward_from(student, from_layer, X), teacher_logits);
}

void check_pair(const LayeredModel& student, const LayeredModel& teacher,
                const SyntheticBatch& data) {
    if (!student.params.same_architecture(teacher.params))
        throw InputError("distillation requires identical student and teacher architectures");
    if (data.inputs.rows == 0) throw InputError("distillation batch is empty");
    if (data.feature_layer >= student.arch.layer_count())
        throw InputError("synthetic batch feature layer out of range");
    if (data.inputs.cols != student.arch.widths[data.feature_layer])
        throw InputError("synthetic batch width does not match the model at its feature layer");
}

} // namespace

LayeredModel distill_global_to_local(const LayeredModel& client_model,
                                     const LayeredModel& global_model,
                                     const SyntheticBatch& data, const DistillConfig& cfg,
                                     double* kl_out) {
    cfg.validate();
    check_pair(client_model, global_model, data);
    LayeredModel student = client_model;
    const double kl = distill_passes(student, global_model, data,
                                     cfg.epochs_global_to_local, cfg.learning_rate,
                                     cfg.batch_size);
    if (kl_out) *kl_out = kl;
    return student;
}

LayeredModel distill_local_to_global(const LayeredModel& global_model,
                                     const std::vector<DistillPair>& pairs,
                                     const DistillConfig& cfg, std::uint64_t round,
                                     double* kl_out) {
    cfg.validate();
    if (pairs.empty()) throw InputError("local-to-global distillation needs at least one client");
    for (const DistillPair& p : pairs) {
        if (!p.teacher || !p.data) throw InputError("null distillation pair");
        check_pair(global_model, *p.teacher, *p.data);
    }

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.client_order_seed, "distill.order", round));
    rng.shuffle(order);

    LayeredModel student = global_model;
    double kl_sum = 0.0;
    for (std::size_t idx : order)
        kl_sum += distill_passes(student, *pairs[idx].teacher, *pairs[idx].data,
                                 cfg.epochs_local_to_global, cfg.learning_rate,
                                 cfg.batch_size);
    if (kl_out) *kl_out = kl_sum / static_cast<double>(pairs.size());
    return student;
}

} // namespace fedbkd
