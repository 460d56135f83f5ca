#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csafl/dataset.hpp"
#include "csafl/latency.hpp"
#include "csafl/linalg.hpp"
#include "csafl/model.hpp"

namespace csafl {

enum class AffinityExponent { norm, norm_squared };

struct ClusterConfig {
    double beta = 1.0;   // weight of the normalized latency column
    double sigma = 1.0;  // Gaussian kernel width
    int n_groups = 4;
    TrainingConfig pretrain;
    std::uint64_t seed = 0;
    AffinityExponent affinity_exponent = AffinityExponent::norm;
    Normalization normalization = Normalization::variance;
    LatencyMode latency_mode = LatencyMode::expected;
    int kmeans_restarts = 10;
    int kmeans_max_iterations = 100;

    void validate() const;
};

// Row i: [beta * t_n(i), cos(i, 0), ..., cos(i, v-1)].
struct SimilarityMatrix {
    DenseMatrix rows;
    std::vector<int> client_order;
    bool latency_degenerate = false;  // zero-variance latencies, column 0 zeroed
};

struct AffinityMatrix {
    DenseMatrix entries;
};

struct GroupAssignment {
    std::vector<int> group_of;  // indexed by client id
    int n_groups = 0;

    std::vector<std::vector<int>> members() const;
    // Throws ConfigError on out-of-range ids or empty groups.
    void validate() const;

    friend bool operator==(const GroupAssignment&, const GroupAssignment&) = default;
};

// Deltas indexed by client id. All clients share one shuffle seed, so two
// clients with identical shards produce identical deltas.
std::uint64_t pretrain_seed(const ClusterConfig& cfg);
std::vector<FlatDelta> pretrain_deltas(const FederatedDataset& ds, const ModelParams& w0, const ClusterConfig& cfg);

// A zero vector has cosine 0 with anything except another zero vector (1).
double cosine_similarity(std::span<const double> u, std::span<const double> v);

SimilarityMatrix build_similarity_matrix(std::span<const FlatDelta> deltas,
                                         std::span<const double> latencies_ms,
                                         double beta,
                                         Normalization normalization = Normalization::variance);

AffinityMatrix gaussian_affinity(const SimilarityMatrix& m,
                                 double sigma,
                                 AffinityExponent exponent = AffinityExponent::norm);

// I - D^-1/2 A D^-1/2.
DenseMatrix normalized_laplacian(const AffinityMatrix& a);

struct KMeansResult {
    std::vector<int> labels;
    double inertia = 0.0;
};

// k-means++ seeding, Lloyd iterations to an assignment fixpoint, best of
// `restarts` by inertia. Empty clusters are reseeded at the point farthest
// from its centroid.
KMeansResult kmeans(const DenseMatrix& points, int k, std::uint64_t seed, int restarts = 10, int max_iterations = 100);

GroupAssignment spectral_cluster(const AffinityMatrix& a,
                                 int n_groups,
                                 std::uint64_t seed,
                                 int restarts = 10,
                                 int max_iterations = 100);

// Seeded shuffle dealt round-robin into n_groups nearly equal groups.
GroupAssignment random_groups(int num_clients, int n_groups, std::uint64_t seed);

GroupAssignment single_group(int num_clients);

struct ClusterReport {
    std::vector<double> latencies_ms;
    SimilarityMatrix similarity;
    AffinityMatrix affinity;
    GroupAssignment assignment;
};

// pretrain -> similarity -> affinity -> spectral clustering.
ClusterReport cluster_clients(const FederatedDataset& ds,
                              std::span<const ClientProfile> profiles,
                              const RadioSystem& sys,
                              const ClusterConfig& cfg);

}  // namespace csafl
