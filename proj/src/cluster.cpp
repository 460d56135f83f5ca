#include "csafl/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>

#include "csafl/errors.hpp"
#include "csafl/rng.hpp"

namespace csafl {

namespace {

constexpr std::uint64_t kPretrainStream = 0x7072657472616e;  // "pretran"

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Renumbers labels in order of first appearance so equal partitions compare equal.
std::vector<int> canonical_labels(const std::vector<int>& labels) {
    std::vector<int> remap;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (static_cast<std::size_t>(l) >= remap.size()) remap.resize(static_cast<std::size_t>(l) + 1, -1);
        if (remap[static_cast<std::size_t>(l)] < 0) {
            remap[static_cast<std::size_t>(l)] = *std::max_element(remap.begin(), remap.end()) + 1;
        }
        out[i] = remap[static_cast<std::size_t>(l)];
    }
    return out;
}

struct LloydRun {
    std::vector<int> labels;
    double inertia = 0.0;
};

LloydRun lloyd(const DenseMatrix& x, std::size_t k, Rng& rng, int max_iterations) {
    const std::size_t n = x.rows();
    const std::size_t dim = x.cols();
    DenseMatrix centers(k, dim);

    // k-means++ seeding.
    std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.uniform_int(n);
    std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best_d2[i] = std::min(best_d2[i], squared_distance(x.row(i), centers.row(c - 1)));
            total += best_d2[i];
        }
        std::size_t pick = n - 1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= best_d2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    }

    std::vector<int> labels(n, -1);
    std::vector<std::size_t> counts(k);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_dist = squared_distance(x.row(i), centers.row(0));
            for (std::size_t c = 1; c < k; ++c) {
                const double d = squared_distance(x.row(i), centers.row(c));
                if (d < best_dist) {
                    best_dist = d;
                    best = c;
                }
            }
            if (labels[i] != static_cast<int>(best)) {
                labels[i] = static_cast<int>(best);
                changed = true;
            }
        }

        std::fill(counts.begin(), counts.end(), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            // Reseed at the point farthest from its own centroid.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] <= 1) continue;
                const double d = squared_distance(x.row(i), centers.row(static_cast<std::size_t>(labels[i])));
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[static_cast<std::size_t>(labels[far])];
            labels[far] = static_cast<int>(c);
            counts[c] = 1;
            std::copy(x.row(far).begin(), x.row(far).end(), centers.row(c).begin());
            changed = true;
        }

        for (std::size_t c = 0; c < k; ++c) {
            auto center = centers.row(c);
            std::fill(center.begin(), center.end(), 0.0);
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto center = centers.row(static_cast<std::size_t>(labels[i]));
            auto point = x.row(i);
            for (std::size_t d = 0; d < dim; ++d) center[d] += point[d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            auto center = centers.row(c);
            for (double& v : center) v /= static_cast<double>(counts[c]);
        }
        if (!changed) break;
    }

    LloydRun run;
    run.labels = std::move(labels);
    for (std::size_t i = 0; i < n; ++i) {
        run.inertia += squared_distance(x.row(i), centers.row(static_cast<std::size_t>(run.labels[i])));
    }
    return run;
}

}  // namespace

void ClusterConfig::validate() const {
    if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    if (n_groups < 1) throw ConfigError("n_groups must be >= 1");
    if (kmeans_restarts < 1) throw ConfigError("kmeans_restarts must be >= 1");
    if (kmeans_max_iterations < 1) throw ConfigError("kmeans_max_iterations must be >= 1");
    pretrain.validate();
}

std::vector<std::vector<int>> GroupAssignment::members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(std::max(n_groups, 0)));
    for (std::size_t c = 0; c < group_of.size(); ++c) {
        out[static_cast<std::size_t>(group_of[c])].push_back(static_cast<int>(c));
    }
    return out;
}

void GroupAssignment::validate() const {
    if (n_groups < 1) throw ConfigError("assignment needs at least one group");
    std::vector<std::size_t> sizes(static_cast<std::size_t>(n_groups), 0);
    for (std::size_t c = 0; c < group_of.size(); ++c) {
        const int g = group_of[c];
        if (g < 0 || g >= n_groups) {
            throw ConfigError("client " + std::to_string(c) + " assigned to group " + std::to_string(g) +
                              " outside [0, " + std::to_string(n_groups) + ")");
        }
        ++sizes[static_cast<std::size_t>(g)];
    }
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        if (sizes[g] == 0) throw ConfigError("group " + std::to_string(g) + " has no members");
    }
}

std::uint64_t pretrain_seed(const ClusterConfig& cfg) { return derive_seed(cfg.seed, {kPretrainStream}); }

std::vector<FlatDelta> pretrain_deltas(const FederatedDataset& ds, const ModelParams& w0, const ClusterConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = pretrain_seed(cfg);
    std::vector<FlatDelta> out;
    out.reserve(ds.num_clients());
    for (const auto& shard : ds.shards) {
        if (shard.train.empty()) {
            throw ContractError("client " + std::to_string(shard.client_id) + " has no training data to pretrain on");
        }
        const ModelParams trained = client_update(w0, shard.train, cfg.pretrain, seed);
        out.push_back(flatten_delta(trained, w0));
    }
    return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ContractError("cosine_similarity: length mismatch (" + std::to_string(u.size()) + " vs " +
                            std::to_string(v.size()) + ")");
    }
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 && nv == 0.0) return 1.0;
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

SimilarityMatrix build_similarity_matrix(std::span<const FlatDelta> deltas,
                                         std::span<const double> latencies_ms,
                                         double beta,
                                         Normalization normalization) {
    const std::size_t v = deltas.size();
    if (v == 0) throw ContractError("build_similarity_matrix needs at least one client");
    if (latencies_ms.size() != v) {
        throw ContractError("build_similarity_matrix: " + std::to_string(v) + " deltas but " +
                            std::to_string(latencies_ms.size()) + " latencies");
    }
    SimilarityMatrix m;
    m.rows = DenseMatrix(v, v + 1);
    m.client_order.resize(v);
    std::iota(m.client_order.begin(), m.client_order.end(), 0);

    std::vector<double> normalized(v, 0.0);
    try {
        normalized = normalize_latencies(latencies_ms, normalization);
    } catch (const DegenerateInputError&) {
        m.latency_degenerate = true;
    } catch (const ContractError&) {
        m.latency_degenerate = true;  // a single client has no spread either
    }
    if (m.latency_degenerate) {
        std::cerr << "warning: client latencies have zero variance; latency column set to zero\n";
    }

    for (std::size_t i = 0; i < v; ++i) {
        m.rows(i, 0) = beta * normalized[i];
        for (std::size_t j = i; j < v; ++j) {
            const double c = cosine_similarity(deltas[i].values, deltas[j].values);
            m.rows(i, j + 1) = c;
            m.rows(j, i + 1) = c;
        }
    }
    return m;
}

AffinityMatrix gaussian_affinity(const SimilarityMatrix& m, double sigma, AffinityExponent exponent) {
    if (!(sigma > 0.0)) throw ContractError("gaussian_affinity needs sigma > 0");
    const std::size_t v = m.rows.rows();
    AffinityMatrix a;
    a.entries = DenseMatrix(v, v);
    const double denom = 2.0 * sigma * sigma;
    for (std::size_t i = 0; i < v; ++i) {
        a.entries(i, i) = 1.0;
        for (std::size_t j = i + 1; j < v; ++j) {
            const double d2 = squared_distance(m.rows.row(i), m.rows.row(j));
            const double dist = exponent == AffinityExponent::norm ? std::sqrt(d2) : d2;
            const double value = std::exp(-dist / denom);
            a.entries(i, j) = value;
            a.entries(j, i) = value;
        }
    }
    return a;
}

DenseMatrix normalized_laplacian(const AffinityMatrix& a) {
    const std::size_t n = a.entries.rows();
    if (n == 0 || a.entries.cols() != n) throw ContractError("affinity matrix must be square and nonempty");
    std::vector<double> inv_sqrt_degree(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) d += a.entries(i, j);
        if (!(d > 0.0)) throw DegenerateInputError("affinity row " + std::to_string(i) + " has zero degree");
        inv_sqrt_degree[i] = 1.0 / std::sqrt(d);
    }
    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double off = a.entries(i, j) * (inv_sqrt_degree[i] * inv_sqrt_degree[j]);
            l(i, j) = (i == j ? 1.0 : 0.0) - off;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) l(j, i) = l(i, j);
    return l;
}

KMeansResult kmeans(const DenseMatrix& points, int k, std::uint64_t seed, int restarts, int max_iterations) {
    const std::size_t n = points.rows();
    if (k < 1 || static_cast<std::size_t>(k) > n) {
        throw ConfigError("k-means needs 1 <= k <= number of points (k=" + std::to_string(k) + ", n=" +
                          std::to_string(n) + ")");
    }
    if (restarts < 1 || max_iterations < 1) throw ConfigError("k-means needs positive restarts and iterations");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        LloydRun run = lloyd(points, static_cast<std::size_t>(k), rng, max_iterations);
        if (run.inertia < best.inertia) {
            best.inertia = run.inertia;
            best.labels = std::move(run.labels);
        }
    }
    best.labels = canonical_labels(best.labels);
    return best;
}

GroupAssignment spectral_cluster(const AffinityMatrix& a, int n_groups, std::uint64_t seed, int restarts,
                                 int max_iterations) {
    const std::size_t v = a.entries.rows();
    if (n_groups < 1 || static_cast<std::size_t>(n_groups) > v) {
        throw ConfigError("n_groups=" + std::to_string(n_groups) + " must lie in [1, " + std::to_string(v) + "]");
    }
    GroupAssignment out;
    out.n_groups = n_groups;
    if (n_groups == 1) {
        out.group_of.assign(v, 0);
        return out;
    }

    const EigenDecomposition eig = jacobi_eigen(normalized_laplacian(a));
    const auto k = static_cast<std::size_t>(n_groups);
    DenseMatrix embedding(v, k);
    for (std::size_t i = 0; i < v; ++i) {
        double norm = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            embedding(i, c) = eig.vectors(i, c);
            norm += embedding(i, c) * embedding(i, c);
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (std::size_t c = 0; c < k; ++c) embedding(i, c) /= norm;
        }
    }
    out.group_of = kmeans(embedding, n_groups, seed, restarts, max_iterations).labels;
    return out;
}

GroupAssignment random_groups(int num_clients, int n_groups, std::uint64_t seed) {
    if (n_groups < 1 || n_groups > num_clients) {
        throw ConfigError("random grouping needs 1 <= n_groups <= num_clients");
    }
    std::vector<int> order(static_cast<std::size_t>(num_clients));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    GroupAssignment out;
    out.n_groups = n_groups;
    out.group_of.assign(order.size(), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        out.group_of[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(n_groups));
    }
    return out;
}

GroupAssignment single_group(int num_clients) {
    GroupAssignment out;
    out.n_groups = 1;
    out.group_of.assign(static_cast<std::size_t>(num_clients), 0);
    return out;
}

ClusterReport cluster_clients(const FederatedDataset& ds,
                              std::span<const ClientProfile> profiles,
                              const RadioSystem& sys,
                              const ClusterConfig& cfg) {
    cfg.validate();
    if (profiles.size() != ds.num_clients()) {
        throw ConfigError("cluster: " + std::to_string(profiles.size()) + " profiles for " +
                          std::to_string(ds.num_clients()) + " clients");
    }
    ClusterReport report;
    report.latencies_ms.reserve(profiles.size());
    for (const auto& p : profiles) {
        if (cfg.latency_mode == LatencyMode::sampled) {
            Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(p.client_id), 0x6c6174ULL}));
            report.latencies_ms.push_back(total_update_latency(p, sys, LatencyMode::sampled, &rng));
        } else {
            report.latencies_ms.push_back(total_update_latency(p, sys, LatencyMode::expected));
        }
    }
    const ModelParams w0 = ModelParams::zeros(static_cast<std::size_t>(ds.num_classes),
                                              static_cast<std::size_t>(ds.feature_dim));
    const auto deltas = pretrain_deltas(ds, w0, cfg);
    report.similarity = build_similarity_matrix(deltas, report.latencies_ms, cfg.beta, cfg.normalization);
    report.affinity = gaussian_affinity(report.similarity, cfg.sigma, cfg.affinity_exponent);
    report.assignment = spectral_cluster(report.affinity, cfg.n_groups, cfg.seed, cfg.kmeans_restarts,
                                         cfg.kmeans_max_iterations);
    return report;
}

}  // namespace csafl
