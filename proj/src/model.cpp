#include "csafl/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "csafl/errors.hpp"
#include "csafl/rng.hpp"
#include "csafl/text.hpp"

namespace csafl {

namespace {

// Overwrites `logits` with softmax probabilities; returns log-sum-exp.
double softmax_in_place(std::span<double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp(z - peak);
        sum += z;
    }
    for (double& z : logits) z /= sum;
    return peak + std::log(sum);
}

void check_sample(const ModelParams& params, const Sample& s) {
    if (s.features.size() != params.feature_dim) {
        throw ContractError("sample width " + std::to_string(s.features.size()) + " does not match model width " +
                            std::to_string(params.feature_dim));
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= params.num_classes) {
        throw ContractError("sample label " + std::to_string(s.label) + " outside the model's classes");
    }
}

}  // namespace

ModelParams ModelParams::zeros(std::size_t num_classes, std::size_t feature_dim) {
    ModelParams p;
    p.num_classes = num_classes;
    p.feature_dim = feature_dim;
    p.weights.assign(num_classes * feature_dim, 0.0);
    p.bias.assign(num_classes, 0.0);
    return p;
}

bool ModelParams::all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(weights.begin(), weights.end(), finite) && std::all_of(bias.begin(), bias.end(), finite);
}

void ModelParams::logits(std::span<const double> features, std::span<double> out) const {
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double* row = weights.data() + c * feature_dim;
        double z = bias[c];
        for (std::size_t j = 0; j < feature_dim; ++j) {
            z += row[j] * features[j];
        }
        out[c] = z;
    }
}

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a finite non-negative number");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (local_epochs < 1) {
        throw ConfigError("local_epochs must be >= 1");
    }
}

LossGradient loss_and_gradient(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) {
        throw ContractError("loss_and_gradient needs a nonempty batch");
    }
    LossGradient out;
    out.gradient = ModelParams::zeros(params.num_classes, params.feature_dim);
    std::vector<double> probs(params.num_classes);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        check_sample(params, s);
        params.logits(s.features, probs);
        const double true_logit = probs[static_cast<std::size_t>(s.label)];
        const double lse = softmax_in_place(probs);
        out.loss += (lse - true_logit) * inv_n;
        probs[static_cast<std::size_t>(s.label)] -= 1.0;
        for (std::size_t c = 0; c < params.num_classes; ++c) {
            const double g = probs[c] * inv_n;
            double* row = out.gradient.weights.data() + c * params.feature_dim;
            for (std::size_t j = 0; j < params.feature_dim; ++j) {
                row[j] += g * s.features[j];
            }
            out.gradient.bias[c] += g;
        }
    }
    return out;
}

ModelParams client_update(const ModelParams& start,
                          std::span<const Sample> train,
                          const TrainingConfig& cfg,
                          std::uint64_t seed) {
    if (train.empty()) {
        throw ContractError("client_update needs a nonempty training shard");
    }
    cfg.validate();
    for (const auto& s : train) check_sample(start, s);

    ModelParams w = start;
    if (cfg.learning_rate == 0.0) {
        return w;
    }
    const std::size_t classes = w.num_classes;
    const std::size_t dim = w.feature_dim;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad_w(classes * dim);
    std::vector<double> grad_b(classes);
    std::vector<double> probs(classes);
    Rng rng(seed);

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += batch) {
            const std::size_t end = std::min(order.size(), begin + batch);
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            for (std::size_t b = begin; b < end; ++b) {
                const Sample& s = train[order[b]];
                w.logits(s.features, probs);
                softmax_in_place(probs);
                probs[static_cast<std::size_t>(s.label)] -= 1.0;
                for (std::size_t c = 0; c < classes; ++c) {
                    const double g = probs[c];
                    double* row = grad_w.data() + c * dim;
                    for (std::size_t j = 0; j < dim; ++j) {
                        row[j] += g * s.features[j];
                    }
                    grad_b[c] += g;
                }
            }
            const double step = cfg.learning_rate / static_cast<double>(end - begin);
            for (std::size_t k = 0; k < grad_w.size(); ++k) w.weights[k] -= step * grad_w[k];
            for (std::size_t c = 0; c < classes; ++c) w.bias[c] -= step * grad_b[c];
        }
    }
    return w;
}

Evaluation evaluate_counts(const ModelParams& params, std::span<const Sample> samples) {
    Evaluation ev;
    std::vector<double> logits(params.num_classes);
    double loss_sum = 0.0;
    for (const auto& s : samples) {
        check_sample(params, s);
        params.logits(s.features, logits);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.size(); ++c) {
            if (logits[c] > logits[best]) best = c;
        }
        if (best == static_cast<std::size_t>(s.label)) ++ev.correct;
        const double true_logit = logits[static_cast<std::size_t>(s.label)];
        loss_sum += softmax_in_place(logits) - true_logit;
    }
    ev.count = samples.size();
    if (ev.count > 0) {
        ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.count);
        ev.mean_loss = loss_sum / static_cast<double>(ev.count);
    }
    return ev;
}

Evaluation evaluate(const ModelParams& params, std::span<const Sample> samples) {
    if (samples.empty()) {
        throw ContractError("evaluate needs at least one sample");
    }
    return evaluate_counts(params, samples);
}

FlatDelta flatten_delta(const ModelParams& after, const ModelParams& before) {
    if (!after.same_shape(before)) {
        throw ContractError("flatten_delta: parameter shapes differ");
    }
    FlatDelta d;
    d.values.reserve(after.parameter_count());
    for (std::size_t k = 0; k < after.weights.size(); ++k) d.values.push_back(after.weights[k] - before.weights[k]);
    for (std::size_t c = 0; c < after.bias.size(); ++c) d.values.push_back(after.bias[c] - before.bias[c]);
    return d;
}

ModelParams fedavg_aggregate(std::span<const WeightedModel> contributions) {
    if (contributions.empty()) {
        throw ContractError("fedavg_aggregate needs at least one contribution");
    }
    const ModelParams& first = *contributions.front().params;
    double total = 0.0;
    for (const auto& c : contributions) {
        if (c.params == nullptr || !c.params->same_shape(first)) {
            throw ContractError("fedavg_aggregate: contribution shapes differ");
        }
        if (c.samples == 0) {
            throw ContractError("fedavg_aggregate: every contribution needs a positive sample count");
        }
        total += static_cast<double>(c.samples);
    }
    if (contributions.size() == 1) {
        return first;
    }
    ModelParams out = ModelParams::zeros(first.num_classes, first.feature_dim);
    for (const auto& c : contributions) {
        const double share = static_cast<double>(c.samples) / total;
        for (std::size_t k = 0; k < out.weights.size(); ++k) out.weights[k] += share * c.params->weights[k];
        for (std::size_t k = 0; k < out.bias.size(); ++k) out.bias[k] += share * c.params->bias[k];
    }
    return out;
}

ModelParams mix_models(const ModelParams& base, const ModelParams& incoming, double alpha) {
    if (!base.same_shape(incoming)) {
        throw ContractError("mix_models: parameter shapes differ");
    }
    ModelParams out = base;
    for (std::size_t k = 0; k < out.weights.size(); ++k) {
        out.weights[k] = (1.0 - alpha) * base.weights[k] + alpha * incoming.weights[k];
    }
    for (std::size_t k = 0; k < out.bias.size(); ++k) {
        out.bias[k] = (1.0 - alpha) * base.bias[k] + alpha * incoming.bias[k];
    }
    return out;
}

void write_model(std::ostream& out, const ModelParams& params) {
    out << "model," << params.num_classes << ',' << params.feature_dim << '\n';
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        for (std::size_t j = 0; j < params.feature_dim; ++j) {
            if (j > 0) out << ',';
            out << text::format_exact(params.weights[c * params.feature_dim + j]);
        }
        out << '\n';
    }
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        if (c > 0) out << ',';
        out << text::format_exact(params.bias[c]);
    }
    out << '\n';
}

ModelParams read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("model block: missing header");
    }
    auto header = text::split(text::trim(line), ',');
    if (header.size() != 3 || header[0] != "model") {
        throw ParseError("model block: expected 'model,<classes>,<features>' header");
    }
    const auto classes = text::parse_int(header[1]);
    const auto dim = text::parse_int(header[2]);
    if (!classes || !dim || *classes < 1 || *dim < 1) {
        throw ParseError("model block: header sizes must be positive integers");
    }
    ModelParams p = ModelParams::zeros(static_cast<std::size_t>(*classes), static_cast<std::size_t>(*dim));
    auto read_row = [&](std::size_t expected, double* dest, const std::string& what) {
        if (!std::getline(in, line)) {
            throw ParseError("model block: missing " + what);
        }
        auto fields = text::split(text::trim(line), ',');
        if (fields.size() != expected) {
            throw ParseError("model block: " + what + " has " + std::to_string(fields.size()) + " values, expected " +
                             std::to_string(expected));
        }
        for (std::size_t k = 0; k < expected; ++k) {
            auto v = text::parse_double(fields[k]);
            if (!v) throw ParseError("model block: bad number in " + what);
            dest[k] = *v;
        }
    };
    for (std::size_t c = 0; c < p.num_classes; ++c) {
        read_row(p.feature_dim, p.weights.data() + c * p.feature_dim, "weight row " + std::to_string(c));
    }
    read_row(p.num_classes, p.bias.data(), "bias row");
    return p;
}

}  // namespace csafl
