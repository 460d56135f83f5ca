#pragma once

#include <vector>

#include "csafl/dataset.hpp"
#include "csafl/model.hpp"

namespace csafl {

// Ground truth behind one client of generate_synthetic: labels are
// argmax(truth.logits(x)) with x ~ N(feature_mean, diag(feature_sd^2)).
struct SyntheticClientModel {
    ModelParams truth;
    std::vector<double> feature_mean;
    std::vector<double> feature_sd;
};

SyntheticClientModel synthetic_client_model(const SyntheticConfig& cfg, int client);

}  // namespace csafl
