#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csafl/dataset.hpp"
#include "csafl/model.hpp"

namespace csafl {

struct IdleRecord;

// One group model and the test shards of the clients it serves.
struct GroupEvaluationInput {
    const ModelParams* model = nullptr;
    std::vector<std::span<const Sample>> test_shards;
};

struct GroupEvaluation {
    std::size_t correct = 0;
    std::size_t samples = 0;
    double loss_sum = 0.0;

    double accuracy() const {
        return samples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples);
    }
};

GroupEvaluation evaluate_group(const GroupEvaluationInput& group);

// Total correct predictions over total test samples, every client scored by
// its own group's model. Throws DegenerateInputError with no test samples.
double weighted_accuracy(std::span<const GroupEvaluationInput> groups);

struct IdleHistogram {
    std::vector<double> edges;      // bucket i is [edges[i], edges[i+1]); the last is open-ended
    std::vector<double> frequency;  // one per edge, normalized over observations
    double threshold_fraction = 0.6;
    double exceed_fraction = 0.0;   // share of observations with idle > threshold * budget
    std::size_t observations = 0;
};

// Uniform edges 0, w, 2w, ..., budget with w = budget / buckets.
std::vector<double> default_idle_edges(double budget_ms, int buckets = 15);

IdleHistogram idle_histogram(std::span<const double> idle_ms,
                             double budget_ms,
                             double threshold_fraction = 0.6,
                             std::vector<double> edges = {});

IdleHistogram idle_histogram(std::span<const IdleRecord> idle,
                             double budget_ms,
                             double threshold_fraction = 0.6,
                             std::vector<double> edges = {});

}  // namespace csafl
