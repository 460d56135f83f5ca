#include "csafl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csafl/errors.hpp"
#include "csafl/sim.hpp"

namespace csafl {

GroupEvaluation evaluate_group(const GroupEvaluationInput& group) {
    if (group.model == nullptr) throw ContractError("group evaluation needs a model");
    GroupEvaluation out;
    for (const auto& shard : group.test_shards) {
        const Evaluation ev = evaluate_counts(*group.model, shard);
        out.correct += ev.correct;
        out.samples += ev.count;
        out.loss_sum += ev.mean_loss * static_cast<double>(ev.count);
    }
    return out;
}

double weighted_accuracy(std::span<const GroupEvaluationInput> groups) {
    std::size_t correct = 0;
    std::size_t samples = 0;
    for (const auto& g : groups) {
        const GroupEvaluation ev = evaluate_group(g);
        correct += ev.correct;
        samples += ev.samples;
    }
    if (samples == 0) {
        throw DegenerateInputError("weighted accuracy needs at least one test sample");
    }
    return static_cast<double>(correct) / static_cast<double>(samples);
}

std::vector<double> default_idle_edges(double budget_ms, int buckets) {
    if (!(budget_ms > 0.0) || buckets < 1) throw ContractError("idle edges need a positive budget and bucket count");
    std::vector<double> edges;
    for (int i = 0; i <= buckets; ++i) {
        edges.push_back(budget_ms * static_cast<double>(i) / static_cast<double>(buckets));
    }
    return edges;
}

IdleHistogram idle_histogram(std::span<const double> idle_ms,
                             double budget_ms,
                             double threshold_fraction,
                             std::vector<double> edges) {
    if (edges.empty()) edges = default_idle_edges(budget_ms);
    if (edges.front() != 0.0 || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw ContractError("idle histogram edges must start at 0 and increase strictly");
    }
    IdleHistogram h;
    h.edges = std::move(edges);
    h.frequency.assign(h.edges.size(), 0.0);
    h.threshold_fraction = threshold_fraction;
    h.observations = idle_ms.size();
    const double limit = threshold_fraction * budget_ms;
    std::size_t exceed = 0;
    for (double v : idle_ms) {
        if (v < 0.0) throw ContractError("idle time cannot be negative");
        const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
        h.frequency[static_cast<std::size_t>(it - h.edges.begin()) - 1] += 1.0;
        if (v > limit) ++exceed;
    }
    if (h.observations > 0) {
        const double n = static_cast<double>(h.observations);
        for (double& f : h.frequency) f /= n;
        h.exceed_fraction = static_cast<double>(exceed) / n;
    }
    return h;
}

IdleHistogram idle_histogram(std::span<const IdleRecord> idle,
                             double budget_ms,
                             double threshold_fraction,
                             std::vector<double> edges) {
    std::vector<double> values;
    values.reserve(idle.size());
    for (const auto& r : idle) values.push_back(r.idle_ms);
    return idle_histogram(values, budget_ms, threshold_fraction, std::move(edges));
}

}  // namespace csafl
