#include "fedbkd/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

void GenTrainConfig::validate() const {
    if (count < 2) throw ConfigError("synthetic count must be at least 2");
    if (epochs < 1) throw ConfigError("generator epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("generator learning rate must be positive");
    if (batch_size < 2) throw ConfigError("generator batch size must be at least 2");
    if (noise_dim < 1) throw ConfigError("noise dimension must be at least 1");
    if (diversity_weight < 0.0) throw ConfigError("diversity weight must be non-negative");
    if (!(init_scale > 0.0)) throw ConfigError("generator init scale must be positive");
}

NoiseBatch sample_noise(std::size_t count, std::size_t noise_dim, std::uint64_t seed) {
    if (count < 2) throw InputError("noise batch needs at least 2 vectors");
    if (noise_dim < 1) throw InputError("noise dimension must be at least 1");
    NoiseBatch out;
    out.seed = seed;
    out.vectors = Matrix(count, noise_dim);
    Rng rng(derive_seed(seed, "noise"));
    for (auto& v : out.vectors.data) v = rng.normal();
    return out;
}

Matrix generate(const LayeredModel& generator, const NoiseBatch& noise) {
    return forward(generator, noise.vectors);
}

std::vector<int> pseudo_labels(const LayeredModel& discriminator, const Matrix& inputs,
                               std::size_t from_layer) {
    const Matrix logits = forward_from(discriminator, from_layer, inputs);
    std::vector<int> labels(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* r = logits.row(i);
        int best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (r[j] > r[best]) best = static_cast<int>(j);
        labels[i] = best;
    }
    return labels;
}

namespace {

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> labels(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* r = logits.row(i);
        int best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (r[j] > r[best]) best = static_cast<int>(j);
        labels[i] = best;
    }
    return labels;
}

struct BatchTerms {
    double oh = 0.0;        // mean cross-entropy against own argmax
    double ms = 0.0;        // mean pair term, <= 0
    std::size_t pairs = 0;
    Matrix doutputs;        // gradient of (oh + lambda * ms) w.r.t. generator outputs
};

// Loss terms and output-space gradient for one generated batch. `noise_rows`
// provides the pair denominators; pair (2k, 2k+1) in current row order.
BatchTerms batch_terms(const LayeredModel& discriminator, const Matrix& outputs,
                       const Matrix& noise_rows, const GenTrainConfig& cfg,
                       bool want_gradient) {
    BatchTerms t;
    const Matrix logits = forward_from(discriminator, cfg.inject_layer, outputs);
    const std::vector<int> labels = argmax_rows(logits);
    t.oh = cross_entropy(logits, labels);
    if (want_gradient) {
        const Matrix dlogits = cross_entropy_grad(logits, labels);
        t.doutputs = input_gradient(discriminator, cfg.inject_layer, outputs, dlogits);
    } else {
        t.doutputs = Matrix(outputs.rows, outputs.cols);
    }

    t.pairs = outputs.rows / 2;
    if (t.pairs == 0 || cfg.diversity_weight == 0.0) {
        if (t.pairs > 0) {
            double ms_sum = 0.0;
            for (std::size_t k = 0; k < t.pairs; ++k) {
                const std::size_t a = 2 * k, b = 2 * k + 1;
                const double den = euclidean_distance(noise_rows.row(a), noise_rows.row(b),
                                                      noise_rows.cols);
                if (den == 0.0) continue;
                ms_sum -= euclidean_distance(outputs.row(a), outputs.row(b), outputs.cols) / den;
            }
            t.ms = ms_sum / static_cast<double>(t.pairs);
        }
        return t;
    }

    double ms_sum = 0.0;
    for (std::size_t k = 0; k < t.pairs; ++k) {
        const std::size_t a = 2 * k, b = 2 * k + 1;
        const double den = euclidean_distance(noise_rows.row(a), noise_rows.row(b),
                                              noise_rows.cols);
        if (den == 0.0) continue; // duplicate latents carry no diversity signal
        const double num = euclidean_distance(outputs.row(a), outputs.row(b), outputs.cols);
        ms_sum -= num / den;
        if (!want_gradient || num == 0.0) continue;
        const double scale = cfg.diversity_weight /
                             (num * den * static_cast<double>(t.pairs));
        for (std::size_t j = 0; j < outputs.cols; ++j) {
            const double diff = outputs(a, j) - outputs(b, j);
            t.doutputs(a, j) -= scale * diff;
            t.doutputs(b, j) += scale * diff;
        }
    }
    t.ms = ms_sum / static_cast<double>(t.pairs);
    return t;
}

} // namespace

double loss_oh(const LayeredModel& discriminator, const Matrix& inputs,
               std::size_t from_layer) {
    const Matrix logits = forward_from(discriminator, from_layer, inputs);
    return cross_entropy(logits, argmax_rows(logits));
}

double loss_ms(const LayeredModel& generator, const std::vector<double>& ra,
               const std::vector<double>& rb) {
    if (ra.size() != rb.size() || ra.size() != generator.arch.input_dim())
        throw InputError("noise vectors do not match the generator input dimension");
    const double den = euclidean_distance(ra.data(), rb.data(), ra.size());
    if (den == 0.0) throw InputError("degenerate noise pair: identical latent vectors");
    Matrix pair(2, ra.size());
    std::copy(ra.begin(), ra.end(), pair.row(0));
    std::copy(rb.begin(), rb.end(), pair.row(1));
    const Matrix out = forward(generator, pair);
    return -euclidean_distance(out.row(0), out.row(1), out.cols) / den;
}

double generator_objective(const LayeredModel& generator, const LayeredModel& discriminator,
                           const NoiseBatch& noise, const GenTrainConfig& cfg) {
    const Matrix outputs = generate(generator, noise);
    const BatchTerms t = batch_terms(discriminator, outputs, noise.vectors, cfg, false);
    return t.oh + cfg.diversity_weight * t.ms;
}

LayeredModel init_generator(const LayeredModel& discriminator, const GenTrainConfig& cfg,
                            std::uint64_t seed) {
    cfg.validate();
    if (cfg.inject_layer >= discriminator.arch.layer_count())
        throw InputError("inject_layer " + std::to_string(cfg.inject_layer) +
                         " leaves no discriminator layers to apply");
    const std::size_t out_dim = discriminator.arch.widths[cfg.inject_layer];
    LayeredModel g = LayeredModel::init(Architecture::generator(cfg.noise_dim, out_dim),
                                        derive_seed(seed, "gen.init"));
    // The shared init keeps activations well inside tanh's linear range, which
    // parks every initial output in a tight cloud around the origin; from there
    // confidence-seeking training drains the whole batch into the one or two
    // nearest argmax basins. Widening the initial weights spreads the first
    // outputs to data scale so each noise vector descends into its own nearest
    // class region.
    for (std::size_t l = 0; l < g.arch.layer_count(); ++l)
        for (double& v : g.params.entries.at(g.arch.weight_key(l)).values)
            v *= cfg.init_scale;
    return g;
}

double train_generator_in_place(LayeredModel& generator, const LayeredModel& discriminator,
                                const NoiseBatch& pool, const GenTrainConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    if (pool.vectors.cols != generator.arch.input_dim())
        throw InputError("noise pool does not match the generator input dimension");
    const std::size_t n = pool.vectors.rows;
    const KeySet trainable = all_keys(generator);
    Rng order_rng(derive_seed(seed, "gen.order"));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double last_epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double oh_sum = 0.0, ms_sum = 0.0;
        std::size_t sample_total = 0, pair_total = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n);
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Matrix noise_rows = pool.vectors.take_rows(rows);
            const Matrix outputs = forward(generator, noise_rows);
            BatchTerms t = batch_terms(discriminator, outputs, noise_rows, cfg, true);
            if (!std::isfinite(t.oh) || !std::isfinite(t.ms))
                throw TrainingDivergenceError("generator loss left the finite range", epoch);
            oh_sum += t.oh * static_cast<double>(rows.size());
            ms_sum += t.ms * static_cast<double>(t.pairs);
            sample_total += rows.size();
            pair_total += t.pairs;
            Gradients grads = backward(generator, noise_rows, t.doutputs, trainable);
            generator.params = sgd_step(generator.params, grads.params, cfg.learning_rate);
        }
        last_epoch_loss = oh_sum / static_cast<double>(sample_total);
        if (pair_total > 0)
            last_epoch_loss += cfg.diversity_weight * ms_sum / static_cast<double>(pair_total);
        if (!std::isfinite(last_epoch_loss))
            throw TrainingDivergenceError("generator epoch loss left the finite range", epoch);
    }
    return last_epoch_loss;
}

GenTrainResult train_generator(const LayeredModel& discriminator, const GenTrainConfig& cfg,
                               std::uint64_t seed, std::size_t client_id) {
    cfg.validate();
    GenTrainResult out;
    out.generator = init_generator(discriminator, cfg, seed);
    const NoiseBatch pool = sample_noise(cfg.count, cfg.noise_dim, derive_seed(seed, "gen.pool"));
    out.final_loss = train_generator_in_place(out.generator, discriminator, pool, cfg, seed);

    out.batch.inputs = generate(out.generator, pool);
    out.batch.pseudo_labels = pseudo_labels(discriminator, out.batch.inputs, cfg.inject_layer);
    out.batch.source_client_id = client_id;
    out.batch.feature_layer = cfg.inject_layer;
    if (!out.batch.inputs.all_finite())
        throw TrainingDivergenceError("synthetic batch contains non-finite values",
                                      cfg.epochs == 0 ? 0 : cfg.epochs - 1);
    return out;
}

Matrix pooled_synthetic_inputs(const LayeredModel& discriminator, GenTrainConfig cfg,
                               std::uint64_t seed, std::size_t pool) {
    cfg.validate();
    if (pool == 0) throw InputError("probe pool must not be empty");
    const std::size_t total = cfg.count;
    const std::size_t dim = discriminator.arch.widths.at(cfg.inject_layer);
    Matrix out(total, dim);
    std::size_t row = 0;
    for (std::size_t k = 0; k < pool && row < total; ++k) {
        const std::size_t share = total / pool + (k < total % pool ? 1 : 0);
        if (share == 0) continue;
        cfg.count = std::max<std::size_t>(share, 2);
        const GenTrainResult probe =
            train_generator(discriminator, cfg, derive_seed(seed, "pool", k), k);
        for (std::size_t i = 0; i < share; ++i, ++row)
            for (std::size_t c = 0; c < dim; ++c) out(row, c) = probe.batch.inputs(i, c);
    }
    return out;
}

} // namespace fedbkd
