#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace csafl {

struct Sample {
    std::vector<double> features;
    int label = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct ClientShard {
    int client_id = 0;
    std::vector<Sample> train;
    std::vector<Sample> test;

    friend bool operator==(const ClientShard&, const ClientShard&) = default;
};

struct FederatedDataset {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<ClientShard> shards;

    std::size_t num_clients() const { return shards.size(); }
    std::size_t total_samples() const;
    const ClientShard& shard(int client_id) const;

    // Throws ContractError on any broken invariant: empty shard list, ids not
    // contiguous from 0, empty train split, wrong feature width, label >= C.
    void validate() const;

    friend bool operator==(const FederatedDataset&, const FederatedDataset&) = default;
};

// Per-client sample counts: count_k = min + round(scale * (k+1)^-exponent),
// with scale chosen so the counts sum to roughly `target_total`.
struct PowerLaw {
    int min_samples = 10;
    double exponent = 1.1;
    std::int64_t target_total = 75349;
};

std::vector<std::size_t> power_law_counts(const PowerLaw& law, int num_clients);

struct SyntheticConfig {
    double alpha = 0.8;  // spread of per-client model means
    double beta = 0.5;   // spread of per-client feature means
    int num_clients = 100;
    int feature_dim = 60;
    int num_classes = 10;
    PowerLaw sizes;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

FederatedDataset generate_synthetic(const SyntheticConfig& cfg);

struct PartitionResult {
    FederatedDataset dataset;
    std::size_t dropped = 0;  // pool samples whose label no client holds
};

// Label-skewed, quantity-skewed partition of a pooled dataset. Each client
// holds `classes_per_client` labels; its share of the pool follows
// (k+1)^-exponent and is spread evenly across its labels.
PartitionResult partition_by_power_law(std::span<const Sample> pool,
                                       int num_clients,
                                       int classes_per_client,
                                       double test_fraction,
                                       std::uint64_t seed,
                                       double exponent = 1.1);

void save_dataset(const FederatedDataset& ds, const std::filesystem::path& path);
FederatedDataset load_dataset(const std::filesystem::path& path);

}  // namespace csafl
