#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csafl/dataset.hpp"
#include "csafl/rng.hpp"
#include "csafl/sim.hpp"

namespace testutil {

// Small labelled dataset: client k gets `sizes[k]` train and 2 test samples
// drawn around a per-label center.
inline csafl::FederatedDataset toy_dataset(const std::vector<std::size_t>& sizes,
                                           int classes = 3,
                                           int features = 4,
                                           std::uint64_t seed = 1) {
    csafl::FederatedDataset ds;
    ds.num_classes = classes;
    ds.feature_dim = features;
    csafl::Rng rng(seed);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        csafl::ClientShard shard;
        shard.client_id = static_cast<int>(k);
        auto make = [&](std::size_t i) {
            csafl::Sample s;
            s.label = static_cast<int>((i + k) % static_cast<std::size_t>(classes));
            for (int j = 0; j < features; ++j) {
                s.features.push_back((j == s.label % features ? 2.0 : 0.0) + rng.normal(0.0, 0.5));
            }
            return s;
        };
        for (std::size_t i = 0; i < sizes[k]; ++i) shard.train.push_back(make(i));
        for (std::size_t i = 0; i < 2; ++i) shard.test.push_back(make(i));
        ds.shards.push_back(std::move(shard));
    }
    return ds;
}

// Latency depends only on the client: fixed per-client values.
inline csafl::LatencyFn fixed_latency(std::map<int, double> by_client) {
    return [by_client = std::move(by_client)](int client, int) { return by_client.at(client); };
}

inline csafl::RoundContext context(const csafl::FederatedDataset& ds,
                                   csafl::LatencyFn latency,
                                   double budget_ms,
                                   int delay_threshold = 4) {
    csafl::RoundContext ctx;
    ctx.data = &ds;
    ctx.training = {0.05, 5, 1};
    ctx.latency = std::move(latency);
    ctx.budget_ms = budget_ms;
    ctx.delay_threshold = delay_threshold;
    ctx.seed = 99;
    ctx.round = 1;
    return ctx;
}

inline csafl::GroupState fresh_group(const csafl::FederatedDataset& ds, std::vector<int> members) {
    csafl::GroupState g;
    g.group_id = 0;
    g.members = std::move(members);
    g.model = csafl::ModelParams::zeros(static_cast<std::size_t>(ds.num_classes),
                                        static_cast<std::size_t>(ds.feature_dim));
    return g;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("csafl_unit_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
