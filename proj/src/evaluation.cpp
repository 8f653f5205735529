#include "fedbkd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fedbkd/errors.hpp"
#include "fedbkd/rng.hpp"

namespace fedbkd {

double personalization_score(const std::vector<RoundReport>& history, std::size_t window) {
    if (window < 1) throw InputError("personalization window must be at least 1");
    if (history.size() < window)
        throw InputError("history has " + std::to_string(history.size()) +
                         " rounds; run at least " + std::to_string(window) +
                         " to score personalization");
    double sum = 0.0;
    for (std::size_t i = history.size() - window; i < history.size(); ++i)
        sum += history[i].mean_client_accuracy;
    return sum / static_cast<double>(window);
}

double generalization_score(const std::vector<LayeredModel>& checkpoints,
                            const ClientDataset& new_client, const FineTuneConfig& cfg,
                            const std::vector<std::size_t>* federation_rows) {
    if (checkpoints.size() != 5)
        throw InputError("generalization scoring needs exactly 5 global checkpoints, got " +
                         std::to_string(checkpoints.size()));
    if (new_client.train.size() == 0 || new_client.test.size() == 0)
        throw InputError("new client needs nonempty train and test splits");
    cfg.sgd.validate();

    if (federation_rows) {
        std::set<std::size_t> fed(federation_rows->begin(), federation_rows->end());
        for (std::size_t r : new_client.train_rows)
            if (fed.count(r))
                throw ProtocolError("holdout client overlaps the federation at row " +
                                    std::to_string(r));
        for (std::size_t r : new_client.test_rows)
            if (fed.count(r))
                throw ProtocolError("holdout client overlaps the federation at row " +
                                    std::to_string(r));
    }

    double acc_sum = 0.0;
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        LayeredModel model = checkpoints[k];
        Rng rng(derive_seed(cfg.seed, "finetune", k));
        for (std::size_t e = 0; e < cfg.epochs; ++e)
            sgd_cross_entropy_epoch(model, new_client.train.features, new_client.train.labels,
                                    model.partition.classification_keys, cfg.sgd.learning_rate,
                                    cfg.sgd.batch_size, rng);
        acc_sum += accuracy(model, new_client.test.features, new_client.test.labels);
    }
    return acc_sum / static_cast<double>(checkpoints.size());
}

double LogitDistanceSeries::mean_synthetic() const {
    double s = 0.0;
    for (double v : synthetic_vs_real) s += v;
    return synthetic_vs_real.empty() ? 0.0 : s / static_cast<double>(synthetic_vs_real.size());
}

double LogitDistanceSeries::mean_random() const {
    double s = 0.0;
    for (double v : random_vs_real) s += v;
    return random_vs_real.empty() ? 0.0 : s / static_cast<double>(random_vs_real.size());
}

namespace {

std::size_t batch_count(std::size_t rows, std::size_t batch_size) {
    return (rows + batch_size - 1) / batch_size;
}

// Mean logit vector of one contiguous batch.
std::vector<double> mean_logits(const LayeredModel& model, const Matrix& inputs,
                                std::size_t start, std::size_t stop) {
    std::vector<std::size_t> rows(stop - start);
    for (std::size_t i = start; i < stop; ++i) rows[i - start] = i;
    const Matrix logits = forward(model, inputs.take_rows(rows));
    std::vector<double> mean(logits.cols, 0.0);
    for (std::size_t r = 0; r < logits.rows; ++r)
        for (std::size_t c = 0; c < logits.cols; ++c) mean[c] += logits(r, c);
    for (double& v : mean) v /= static_cast<double>(logits.rows);
    return mean;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

} // namespace

LogitDistanceSeries logit_l1_diagnostic(const LayeredModel& global_model,
                                        const Matrix& synthetic, const Matrix& random_inputs,
                                        const LabeledDataset& real, std::size_t batch_size) {
    if (batch_size < 1) throw InputError("batch size must be at least 1");
    if (synthetic.rows == 0 || random_inputs.rows == 0 || real.size() == 0)
        throw InputError("logit diagnostic needs nonempty synthetic, random and real data");
    const std::size_t n = batch_count(real.size(), batch_size);
    if (batch_count(synthetic.rows, batch_size) != n ||
        batch_count(random_inputs.rows, batch_size) != n)
        throw InputError("logit diagnostic sources split into different batch counts");

    LogitDistanceSeries out;
    for (std::size_t b = 0; b < n; ++b) {
        const auto slice = [&](std::size_t rows) {
            const std::size_t start = b * batch_size;
            return std::pair<std::size_t, std::size_t>{start,
                                                       std::min(start + batch_size, rows)};
        };
        const auto [ss, se] = slice(synthetic.rows);
        const auto [rs, re] = slice(random_inputs.rows);
        const auto [ds, de] = slice(real.size());
        const auto syn = mean_logits(global_model, synthetic, ss, se);
        const auto rnd = mean_logits(global_model, random_inputs, rs, re);
        const auto ref = mean_logits(global_model, real.features, ds, de);
        out.synthetic_vs_real.push_back(l1(syn, ref));
        out.random_vs_real.push_back(l1(rnd, ref));
    }
    return out;
}

std::vector<Matrix> representation_dump(const LayeredModel& model, const Matrix& inputs) {
    return representation_activations(model, inputs);
}

} // namespace fedbkd
