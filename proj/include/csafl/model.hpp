#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "csafl/dataset.hpp"

namespace csafl {

// Multinomial logistic regression: logits = W x + b, W is C x F row-major.
struct ModelParams {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    static ModelParams zeros(std::size_t num_classes, std::size_t feature_dim);

    std::size_t parameter_count() const { return weights.size() + bias.size(); }
    bool same_shape(const ModelParams& other) const {
        return num_classes == other.num_classes && feature_dim == other.feature_dim;
    }
    bool all_finite() const;

    // `out` must have num_classes entries.
    void logits(std::span<const double> features, std::span<double> out) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TrainingConfig {
    double learning_rate = 0.03;
    int batch_size = 10;
    int local_epochs = 10;

    void validate() const;
};

struct FlatDelta {
    std::vector<double> values;
};

struct LossGradient {
    double loss = 0.0;  // mean cross-entropy over the batch
    ModelParams gradient;
};

// Mean cross-entropy and its exact gradient over `batch`.
LossGradient loss_and_gradient(const ModelParams& params, std::span<const Sample> batch);

// E epochs of minibatch SGD. Each epoch reshuffles with a seeded Fisher-Yates
// permutation; the trailing partial batch is kept.
ModelParams client_update(const ModelParams& start,
                          std::span<const Sample> train,
                          const TrainingConfig& cfg,
                          std::uint64_t seed);

struct Evaluation {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t correct = 0;
    std::size_t count = 0;
};

// Ties in the argmax go to the lowest class id.
Evaluation evaluate(const ModelParams& params, std::span<const Sample> samples);

// Same as evaluate() but accepts an empty sample set (returns zero counts).
Evaluation evaluate_counts(const ModelParams& params, std::span<const Sample> samples);

FlatDelta flatten_delta(const ModelParams& after, const ModelParams& before);

struct WeightedModel {
    const ModelParams* params = nullptr;
    std::size_t samples = 0;
};

// Sum_i (n_i / n) w_i over full parameter vectors.
ModelParams fedavg_aggregate(std::span<const WeightedModel> contributions);

// (1 - alpha) * base + alpha * incoming.
ModelParams mix_models(const ModelParams& base, const ModelParams& incoming, double alpha);

void write_model(std::ostream& out, const ModelParams& params);
ModelParams read_model(std::istream& in);

}  // namespace csafl
