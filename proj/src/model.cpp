#include "fedbkd/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedbkd/errors.hpp"

namespace fedbkd {

namespace {

// Rows of X through one affine layer: Z = X * W^T + b. W is (out x in).
Matrix affine(const Matrix& X, const Tensor& W, const Tensor& b) {
    const std::size_t out_dim = W.shape[0];
    const std::size_t in_dim = W.shape[1];
    Matrix Z(X.rows, out_dim);
    for (std::size_t r = 0; r < X.rows; ++r) {
        const double* x = X.row(r);
        double* z = Z.row(r);
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* w = W.values.data() + o * in_dim;
            double acc = b.values[o];
            for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * x[i];
            z[o] = acc;
        }
    }
    return Z;
}

void tanh_inplace(Matrix& m) {
    for (double& v : m.data) v = std::tanh(v);
}

// Activations a_0..a_L where a_0 = inputs and a_L = logits; hidden layers are
// post-tanh. Layers [from_layer, L) of the model participate.
std::vector<Matrix> forward_stack(const LayeredModel& model, std::size_t from_layer,
                                  const Matrix& inputs) {
    const std::size_t L = model.arch.layer_count();
    if (from_layer >= L)
        throw InputError("forward: entry layer out of range");
    if (inputs.cols != model.arch.widths[from_layer])
        throw InputError("forward: input dimension " + std::to_string(inputs.cols) +
                         " does not match layer width " +
                         std::to_string(model.arch.widths[from_layer]));

    std::vector<Matrix> acts;
    acts.reserve(L - from_layer + 1);
    acts.push_back(inputs);
    for (std::size_t l = from_layer; l < L; ++l) {
        Matrix z = affine(acts.back(),
                          model.params.entries.at(model.arch.weight_key(l)),
                          model.params.entries.at(model.arch.bias_key(l)));
        if (l + 1 < L) tanh_inplace(z);
        acts.push_back(std::move(z));
    }
    return acts;
}

// Row-wise log-softmax, numerically stable.
Matrix log_softmax(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* z = logits.row(r);
        double mx = z[0];
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(z[c] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < logits.cols; ++c) out(r, c) = z[c] - lse;
    }
    return out;
}

Gradients backward_impl(const LayeredModel& model, std::size_t from_layer,
                        const Matrix& inputs, const Matrix& dlogits,
                        const KeySet& trainable_keys, bool want_params) {
    const std::size_t L = model.arch.layer_count();
    std::vector<Matrix> acts = forward_stack(model, from_layer, inputs);
    if (dlogits.rows != inputs.rows || dlogits.cols != model.arch.output_dim())
        throw InputError("backward: logit gradient shape mismatch");

    Gradients out;
    Matrix delta = dlogits; // dLoss/dZ of the layer being processed
    for (std::size_t l = L; l-- > from_layer;) {
        const Matrix& below = acts[l - from_layer]; // input to layer l
        const std::string wkey = model.arch.weight_key(l);
        const std::string bkey = model.arch.bias_key(l);
        const Tensor& W = model.params.entries.at(wkey);
        const std::size_t out_dim = W.shape[0];
        const std::size_t in_dim = W.shape[1];

        if (want_params && trainable_keys.count(wkey)) {
            Tensor gw;
            gw.shape = W.shape;
            gw.values.assign(out_dim * in_dim, 0.0);
            for (std::size_t r = 0; r < delta.rows; ++r) {
                const double* d = delta.row(r);
                const double* a = below.row(r);
                for (std::size_t o = 0; o < out_dim; ++o) {
                    double* g = gw.values.data() + o * in_dim;
                    const double dv = d[o];
                    for (std::size_t i = 0; i < in_dim; ++i) g[i] += dv * a[i];
                }
            }
            out.params.entries.emplace(wkey, std::move(gw));
        }
        if (want_params && trainable_keys.count(bkey)) {
            Tensor gb;
            gb.shape = {out_dim};
            gb.values.assign(out_dim, 0.0);
            for (std::size_t r = 0; r < delta.rows; ++r) {
                const double* d = delta.row(r);
                for (std::size_t o = 0; o < out_dim; ++o) gb.values[o] += d[o];
            }
            out.params.entries.emplace(bkey, std::move(gb));
        }

        // dLoss/d(input of layer l)
        Matrix dbelow(delta.rows, in_dim);
        for (std::size_t r = 0; r < delta.rows; ++r) {
            const double* d = delta.row(r);
            double* db = dbelow.row(r);
            for (std::size_t i = 0; i < in_dim; ++i) db[i] = 0.0;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double* w = W.values.data() + o * in_dim;
                const double dv = d[o];
                for (std::size_t i = 0; i < in_dim; ++i) db[i] += dv * w[i];
            }
        }
        if (l > from_layer) {
            // chain through tanh of the layer below: a' = 1 - a^2
            for (std::size_t r = 0; r < dbelow.rows; ++r) {
                const double* a = below.row(r);
                double* db = dbelow.row(r);
                for (std::size_t i = 0; i < in_dim; ++i) db[i] *= 1.0 - a[i] * a[i];
            }
        }
        delta = std::move(dbelow);
    }
    out.inputs = std::move(delta);
    return out;
}

} // namespace

// --- Architecture ------------------------------------------------------------

std::string Architecture::weight_key(std::size_t layer) const {
    return "fc" + std::to_string(layer) + ".weight";
}

std::string Architecture::bias_key(std::size_t layer) const {
    return "fc" + std::to_string(layer) + ".bias";
}

std::string Architecture::descriptor() const {
    std::ostringstream os;
    os << "mlp";
    for (std::size_t w : widths) os << ' ' << w;
    os << ' ' << hidden_activation;
    return os.str();
}

Architecture Architecture::from_descriptor(const std::string& text) {
    std::istringstream is(text);
    std::string kind;
    is >> kind;
    if (kind != "mlp")
        throw InputError("architecture descriptor: unknown kind '" + kind + "'");
    Architecture arch;
    std::string token;
    while (is >> token) {
        if (std::isdigit(static_cast<unsigned char>(token[0]))) {
            arch.widths.push_back(static_cast<std::size_t>(std::stoull(token)));
        } else {
            arch.hidden_activation = token;
        }
    }
    arch.validate();
    return arch;
}

void Architecture::validate() const {
    if (widths.size() < 2)
        throw ConfigError("architecture: needs at least an input and an output width");
    for (std::size_t w : widths)
        if (w == 0) throw ConfigError("architecture: zero layer width");
    if (hidden_activation != "tanh")
        throw ConfigError("architecture: unsupported activation '" + hidden_activation + "'");
}

Architecture Architecture::classifier(std::size_t input_dim, std::size_t class_count) {
    Architecture a;
    a.widths = {input_dim, 64, 32, class_count};
    return a;
}

Architecture Architecture::generator(std::size_t noise_dim, std::size_t output_dim) {
    Architecture a;
    a.widths = {noise_dim, 64, 64, output_dim};
    return a;
}

void SGDConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("sgd: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("sgd: batch size must be >= 1");
}

// --- LayeredModel ------------------------------------------------------------

namespace {

LayeredModel build_model(const Architecture& arch) {
    arch.validate();
    LayeredModel m;
    m.arch = arch;
    const std::size_t L = arch.layer_count();
    for (std::size_t l = 0; l < L; ++l) {
        Tensor w;
        w.shape = {arch.widths[l + 1], arch.widths[l]};
        w.values.assign(w.shape[0] * w.shape[1], 0.0);
        Tensor b;
        b.shape = {arch.widths[l + 1]};
        b.values.assign(arch.widths[l + 1], 0.0);
        m.params.entries.emplace(arch.weight_key(l), std::move(w));
        m.params.entries.emplace(arch.bias_key(l), std::move(b));
        if (l + 1 == L) {
            m.partition.classification_keys.insert(arch.weight_key(l));
            m.partition.classification_keys.insert(arch.bias_key(l));
        } else {
            m.partition.representation_keys.insert(arch.weight_key(l));
            m.partition.representation_keys.insert(arch.bias_key(l));
        }
    }
    return m;
}

} // namespace

LayeredModel LayeredModel::init(const Architecture& arch, std::uint64_t seed) {
    LayeredModel m = build_model(arch);
    Rng rng(seed);
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(arch.widths[l]));
        for (double& v : m.params.entries.at(arch.weight_key(l)).values)
            v = rng.uniform(-bound, bound);
        for (double& v : m.params.entries.at(arch.bias_key(l)).values)
            v = rng.uniform(-bound, bound);
    }
    return m;
}

LayeredModel LayeredModel::zeros(const Architecture& arch) { return build_model(arch); }

// --- forward -----------------------------------------------------------------

Matrix forward(const LayeredModel& model, const Matrix& inputs) {
    return forward_from(model, 0, inputs);
}

Matrix forward_from(const LayeredModel& model, std::size_t from_layer, const Matrix& inputs) {
    return forward_stack(model, from_layer, inputs).back();
}

Matrix representation(const LayeredModel& model, const Matrix& inputs) {
    std::vector<Matrix> acts = forward_stack(model, 0, inputs);
    return acts[acts.size() - 2];
}

std::vector<Matrix> representation_activations(const LayeredModel& model, const Matrix& inputs) {
    std::vector<Matrix> acts = forward_stack(model, 0, inputs);
    // drop the raw input and the logits; keep the hidden activations
    return {acts.begin() + 1, acts.end() - 1};
}

// --- losses --------------------------------------------------------------------

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size())
        throw InputError("cross_entropy: batch size mismatch");
    if (logits.rows == 0)
        throw InputError("cross_entropy: empty batch");
    Matrix ls = log_softmax(logits);
    double total = 0.0;
    for (std::size_t r = 0; r < ls.rows; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= ls.cols)
            throw InputError("cross_entropy: label " + std::to_string(label) +
                             " out of range [0, " + std::to_string(ls.cols) + ")");
        total -= ls(r, static_cast<std::size_t>(label));
    }
    return total / static_cast<double>(ls.rows);
}

Matrix cross_entropy_grad(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size())
        throw InputError("cross_entropy_grad: batch size mismatch");
    Matrix g = softmax(logits);
    const double inv = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t r = 0; r < g.rows; ++r) {
        g(r, static_cast<std::size_t>(labels[r])) -= 1.0;
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) *= inv;
    }
    return g;
}

Matrix softmax(const Matrix& logits) {
    Matrix out = log_softmax(logits);
    for (double& v : out.data) v = std::exp(v);
    return out;
}

double kl_divergence(const Matrix& p_logits, const Matrix& q_logits) {
    if (p_logits.rows != q_logits.rows || p_logits.cols != q_logits.cols)
        throw InputError("kl_divergence: shape mismatch");
    if (p_logits.rows == 0)
        throw InputError("kl_divergence: empty batch");
    Matrix lp = log_softmax(p_logits);
    Matrix lq = log_softmax(q_logits);
    double total = 0.0;
    for (std::size_t r = 0; r < lp.rows; ++r)
        for (std::size_t c = 0; c < lp.cols; ++c)
            total += std::exp(lp(r, c)) * (lp(r, c) - lq(r, c));
    return total / static_cast<double>(lp.rows);
}

Matrix kl_divergence_grad(const Matrix& p_logits, const Matrix& q_logits) {
    if (p_logits.rows != q_logits.rows || p_logits.cols != q_logits.cols)
        throw InputError("kl_divergence_grad: shape mismatch");
    Matrix lp = log_softmax(p_logits);
    Matrix lq = log_softmax(q_logits);
    Matrix g(p_logits.rows, p_logits.cols);
    const double inv = 1.0 / static_cast<double>(p_logits.rows);
    for (std::size_t r = 0; r < lp.rows; ++r) {
        double row_kl = 0.0;
        for (std::size_t c = 0; c < lp.cols; ++c)
            row_kl += std::exp(lp(r, c)) * (lp(r, c) - lq(r, c));
        for (std::size_t c = 0; c < lp.cols; ++c) {
            const double p = std::exp(lp(r, c));
            g(r, c) = p * ((lp(r, c) - lq(r, c)) - row_kl) * inv;
        }
    }
    return g;
}

// --- backward ------------------------------------------------------------------

Gradients backward(const LayeredModel& model, const Matrix& inputs,
                   const Matrix& dlogits, const KeySet& trainable_keys) {
    return backward_from(model, 0, inputs, dlogits, trainable_keys);
}

Gradients backward_from(const LayeredModel& model, std::size_t from_layer,
                        const Matrix& inputs, const Matrix& dlogits,
                        const KeySet& trainable_keys) {
    if (trainable_keys.empty())
        throw InputError("backward: empty trainable set");
    for (const std::string& key : trainable_keys)
        if (!model.params.entries.count(key))
            throw InputError("backward: unknown trainable key '" + key + "'");
    return backward_impl(model, from_layer, inputs, dlogits, trainable_keys, true);
}

Gradients backward(const LayeredModel& model, const Matrix& inputs,
                   const LossFn& loss, const KeySet& trainable_keys) {
    Matrix logits = forward(model, inputs);
    LossGrad lg = loss(logits);
    return backward(model, inputs, lg.dlogits, trainable_keys);
}

Matrix input_gradient(const LayeredModel& model, std::size_t from_layer,
                      const Matrix& inputs, const Matrix& dlogits) {
    return backward_impl(model, from_layer, inputs, dlogits, {}, false).inputs;
}

// --- training helpers ------------------------------------------------------------

double sgd_cross_entropy_epoch(LayeredModel& model, const Matrix& X,
                               const std::vector<int>& y, const KeySet& trainable_keys,
                               double learning_rate, std::size_t batch_size, Rng& rng) {
    if (X.rows == 0)
        throw InputError("sgd_cross_entropy_epoch: empty dataset");
    std::vector<std::size_t> order(X.rows);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
        Matrix bx = X.take_rows(idx);
        std::vector<int> by(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) by[i] = y[idx[i]];

        Matrix logits = forward(model, bx);
        loss_sum += cross_entropy(logits, by) * static_cast<double>(idx.size());
        Gradients g = backward(model, bx, cross_entropy_grad(logits, by), trainable_keys);
        model.params = sgd_step(model.params, g.params, learning_rate);
    }
    return loss_sum / static_cast<double>(X.rows);
}

double accuracy(const LayeredModel& model, const Matrix& X, const std::vector<int>& y) {
    if (X.rows == 0)
        throw InputError("accuracy: empty batch");
    Matrix logits = forward(model, X);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        if (static_cast<int>(best) == y[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

KeySet all_keys(const LayeredModel& model) {
    KeySet keys;
    for (const auto& [name, tensor] : model.params.entries) keys.insert(name);
    return keys;
}

} // namespace fedbkd
