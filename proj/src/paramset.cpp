#include "fedbkd/paramset.hpp"

#include <cmath>
#include <cstring>

#include "fedbkd/errors.hpp"

namespace fedbkd {

bool ParamSet::same_architecture(const ParamSet& other) const {
    if (entries.size() != other.entries.size()) return false;
    auto it = entries.begin();
    auto jt = other.entries.begin();
    for (; it != entries.end(); ++it, ++jt) {
        if (it->first != jt->first) return false;
        if (it->second.shape != jt->second.shape) return false;
    }
    return true;
}

bool ParamSet::all_finite() const {
    for (const auto& [name, tensor] : entries)
        for (double v : tensor.values)
            if (!std::isfinite(v)) return false;
    return true;
}

bool ParamSet::bit_equal(const ParamSet& other) const {
    if (!same_architecture(other)) return false;
    auto it = entries.begin();
    auto jt = other.entries.begin();
    for (; it != entries.end(); ++it, ++jt) {
        const auto& a = it->second.values;
        const auto& b = jt->second.values;
        if (a.size() != b.size()) return false;
        if (!a.empty() &&
            std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::uint64_t ParamSet::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, tensor] : entries) {
        mix_bytes(name.data(), name.size());
        for (std::size_t d : tensor.shape) mix_bytes(&d, sizeof(d));
        if (!tensor.values.empty())
            mix_bytes(tensor.values.data(), tensor.values.size() * sizeof(double));
    }
    return h;
}

bool LayerPartition::covers(const ParamSet& params) const {
    std::size_t seen = 0;
    for (const auto& [name, tensor] : params.entries) {
        bool in_rep = representation_keys.count(name) > 0;
        bool in_cls = classification_keys.count(name) > 0;
        if (in_rep == in_cls) return false; // missing or doubly assigned
        ++seen;
    }
    return seen == representation_keys.size() + classification_keys.size();
}

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double learning_rate) {
    if (learning_rate <= 0.0)
        throw ConfigError("sgd_step: learning rate must be positive");
    ParamSet out = params;
    for (const auto& [name, grad] : grads.entries) {
        auto it = out.entries.find(name);
        if (it == out.entries.end())
            throw InputError("sgd_step: gradient for unknown parameter '" + name + "'");
        Tensor& target = it->second;
        if (target.shape != grad.shape)
            throw InputError("sgd_step: shape mismatch for parameter '" + name + "'");
        for (std::size_t i = 0; i < target.values.size(); ++i) {
            target.values[i] -= learning_rate * grad.values[i];
            if (!std::isfinite(target.values[i]))
                throw InputError("sgd_step: non-finite value in parameter '" + name + "'");
        }
    }
    return out;
}

ParamSet mean_paramsets(const std::vector<const ParamSet*>& models) {
    if (models.empty())
        throw InputError("mean_paramsets: empty model list");
    for (const ParamSet* m : models)
        if (!m->same_architecture(*models.front()))
            throw InputError("mean_paramsets: mismatched architectures");

    // baseline + mean of deltas: algebraically the plain mean, but exact when
    // the inputs coincide (deltas vanish instead of accumulating rounding)
    ParamSet out = *models.front();
    const double inv = 1.0 / static_cast<double>(models.size());
    for (auto& [name, tensor] : out.entries) {
        // fixed order: models in list order per element, elements in index order
        for (std::size_t i = 0; i < tensor.values.size(); ++i) {
            const double base = tensor.values[i];
            double delta_sum = 0.0;
            for (const ParamSet* m : models)
                delta_sum += m->entries.at(name).values[i] - base;
            tensor.values[i] = base + delta_sum * inv;
        }
    }
    return out;
}

ParamSet replace_representation(const ParamSet& target, const ParamSet& source,
                                const LayerPartition& partition) {
    if (!target.same_architecture(source))
        throw InputError("replace_representation: mismatched architectures");
    if (!partition.covers(target))
        throw InputError("replace_representation: partition does not cover parameters");
    ParamSet out = target;
    for (const std::string& key : partition.representation_keys)
        out.entries.at(key) = source.entries.at(key);
    return out;
}

} // namespace fedbkd
