#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "csafl/cluster.hpp"
#include "csafl/errors.hpp"
#include "csafl/linalg.hpp"
#include "csafl/rng.hpp"
#include "helpers.hpp"

using namespace csafl;

namespace {

AffinityMatrix block_affinity(const std::vector<int>& block, double within, double across) {
    const std::size_t n = block.size();
    AffinityMatrix a;
    a.entries = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a.entries(i, j) = i == j ? 1.0 : (block[i] == block[j] ? within : across);
    return a;
}

// Minimum normalized cut over every 2-partition, by enumeration.
std::vector<int> min_ncut_partition(const AffinityMatrix& a) {
    const std::size_t n = a.entries.rows();
    double best = INFINITY;
    std::vector<int> best_side;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        if (mask & 1u) continue;  // fix node 0 on side 0 to skip mirrored partitions
        double cut = 0.0, vol0 = 0.0, vol1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool si = (mask >> i) & 1u;
            for (std::size_t j = 0; j < n; ++j) {
                (si ? vol1 : vol0) += a.entries(i, j);
                if (si != static_cast<bool>((mask >> j) & 1u)) cut += a.entries(i, j);
            }
        }
        cut /= 2.0;
        const double ncut = cut / vol0 + cut / vol1;
        if (ncut < best) {
            best = ncut;
            best_side.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) best_side[i] = static_cast<int>((mask >> i) & 1u);
        }
    }
    return best_side;
}

std::set<std::set<int>> as_partition(const std::vector<int>& labels) {
    std::map<int, std::set<int>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].insert(static_cast<int>(i));
    std::set<std::set<int>> out;
    for (auto& [g, members] : groups) out.insert(members);
    return out;
}

}  // namespace

TEST_SUITE("cluster") {
    TEST_CASE("cosine similarity conventions") {
        const std::vector<double> u = {1.0, 0.0}, v = {0.0, 2.0}, w = {-3.0, 0.0}, z = {0.0, 0.0};
        CHECK(cosine_similarity(u, u) == doctest::Approx(1.0));
        CHECK(cosine_similarity(u, v) == doctest::Approx(0.0));
        CHECK(cosine_similarity(u, w) == doctest::Approx(-1.0));
        CHECK(cosine_similarity(u, z) == 0.0);
        CHECK(cosine_similarity(z, z) == 1.0);
        CHECK_THROWS_AS(cosine_similarity(u, std::vector<double>{1.0}), ContractError);
    }

    TEST_CASE("similarity rows are [beta * normalized latency, cosines]") {
        const std::vector<FlatDelta> deltas = {{{1.0, 0.0}}, {{0.0, 1.0}}, {{1.0, 1.0}}};
        const std::vector<double> lat = {1.0, 2.0, 3.0};
        const auto m = build_similarity_matrix(deltas, lat, 2.0);
        REQUIRE(m.rows.rows() == 3);
        REQUIRE(m.rows.cols() == 4);
        CHECK(m.rows(0, 0) == doctest::Approx(-3.0));
        CHECK(m.rows(2, 0) == doctest::Approx(3.0));
        CHECK(m.rows(0, 1) == doctest::Approx(1.0));
        CHECK(m.rows(0, 2) == doctest::Approx(0.0));
        CHECK(m.rows(2, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
        CHECK_FALSE(m.latency_degenerate);

        const std::vector<double> flat = {5.0, 5.0, 5.0};
        const auto d = build_similarity_matrix(deltas, flat, 2.0);
        CHECK(d.latency_degenerate);
        for (std::size_t i = 0; i < 3; ++i) CHECK(d.rows(i, 0) == 0.0);
    }

    TEST_CASE("gaussian affinity at distance 2 sigma^2 is 1/e") {
        const double sigma = 1.7;
        SimilarityMatrix m;
        m.rows = DenseMatrix(2, 3);
        m.rows(1, 0) = 2.0 * sigma * sigma * 0.6;
        m.rows(1, 2) = 2.0 * sigma * sigma * 0.8;
        const auto a = gaussian_affinity(m, sigma);
        CHECK(std::abs(a.entries(0, 1) - std::exp(-1.0)) <= 1e-12);
        CHECK(a.entries(1, 0) == a.entries(0, 1));
        CHECK(a.entries(0, 0) == 1.0);
        const auto sq = gaussian_affinity(m, sigma, AffinityExponent::norm_squared);
        CHECK(sq.entries(0, 1) == doctest::Approx(std::exp(-2.0 * sigma * sigma)));
    }

    TEST_CASE("normalized laplacian of two disconnected pairs") {
        AffinityMatrix a;
        a.entries = DenseMatrix(4, 4);
        a.entries(0, 1) = a.entries(1, 0) = 1.0;
        a.entries(2, 3) = a.entries(3, 2) = 1.0;
        const auto l = normalized_laplacian(a);
        CHECK(l(0, 0) == doctest::Approx(1.0));
        CHECK(l(0, 1) == doctest::Approx(-1.0));
        CHECK(l(0, 2) == 0.0);
        const auto eig = jacobi_eigen(l);
        CHECK(eig.values[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::abs(eig.values[1]) <= 1e-12);
        CHECK(eig.values[2] == doctest::Approx(2.0));
    }

    TEST_CASE("jacobi reconstructs a random symmetric matrix") {
        Rng rng(17);
        const std::size_t n = 8;
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.normal();
        const auto eig = jacobi_eigen(m);
        for (std::size_t k = 1; k < n; ++k) CHECK(eig.values[k - 1] <= eig.values[k]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double rebuilt = 0.0, gram = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    rebuilt += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
                    gram += eig.vectors(k, i) * eig.vectors(k, j);
                }
                CHECK(std::abs(rebuilt - m(i, j)) <= 1e-10);
                CHECK(std::abs(gram - (i == j ? 1.0 : 0.0)) <= 1e-10);
            }
        }
        DenseMatrix two(2, 2);
        two(0, 0) = two(1, 1) = 2.0;
        two(0, 1) = two(1, 0) = 1.0;
        const auto e2 = jacobi_eigen(two);
        CHECK(e2.values[0] == doctest::Approx(1.0));
        CHECK(e2.values[1] == doctest::Approx(3.0));
    }

    TEST_CASE("k-means separates well-spaced blobs") {
        DenseMatrix pts(9, 2);
        const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
        Rng rng(2);
        for (std::size_t i = 0; i < 9; ++i) {
            pts(i, 0) = centers[i % 3][0] + rng.normal(0.0, 0.1);
            pts(i, 1) = centers[i % 3][1] + rng.normal(0.0, 0.1);
        }
        const auto r = kmeans(pts, 3, 5);
        CHECK(as_partition(r.labels) == as_partition({0, 1, 2, 0, 1, 2, 0, 1, 2}));
        CHECK(r.labels[0] == 0);  // labels canonical by first appearance
        CHECK_THROWS_AS(kmeans(pts, 10, 1), ConfigError);
    }

    TEST_CASE("spectral clustering recovers the minimum normalized cut on two blocks") {
        const auto a = block_affinity({0, 0, 0, 1, 1, 1}, 0.9, 0.01);
        const auto oracle = min_ncut_partition(a);
        CHECK(as_partition(oracle) == as_partition({0, 0, 0, 1, 1, 1}));
        const auto g = spectral_cluster(a, 2, 11);
        CHECK(as_partition(g.group_of) == as_partition(oracle));
        CHECK(g.n_groups == 2);
    }

    TEST_CASE("spectral clustering edge cases") {
        const auto a = block_affinity({0, 1, 0, 1, 0}, 0.8, 0.05);
        const auto one = spectral_cluster(a, 1, 3);
        CHECK(one.group_of == std::vector<int>(5, 0));
        CHECK_THROWS_AS(spectral_cluster(a, 6, 3), ConfigError);
    }

    TEST_CASE("spectral clustering is permutation equivariant") {
        const std::vector<int> blocks = {0, 1, 2, 0, 1, 2, 0, 1, 2};
        const auto a = block_affinity(blocks, 0.9, 0.02);
        const auto base = spectral_cluster(a, 3, 4);
        const std::vector<int> perm = {4, 7, 0, 2, 8, 1, 6, 3, 5};
        AffinityMatrix pa;
        pa.entries = DenseMatrix(9, 9);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 9; ++j) pa.entries(i, j) = a.entries(perm[i], perm[j]);
        const auto permuted = spectral_cluster(pa, 3, 4);
        std::vector<int> expected(9);
        for (std::size_t i = 0; i < 9; ++i) expected[i] = base.group_of[perm[i]];
        CHECK(as_partition(permuted.group_of) == as_partition(expected));
    }

    TEST_CASE("random and single groups") {
        const auto g = random_groups(10, 3, 8);
        CHECK_NOTHROW(g.validate());
        std::vector<int> sizes(3, 0);
        for (int x : g.group_of) ++sizes[x];
        CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
        CHECK(random_groups(10, 3, 8) == g);
        CHECK(single_group(4).group_of == std::vector<int>(4, 0));
        GroupAssignment gap{{0, 2, 2}, 3};
        CHECK_THROWS_AS(gap.validate(), ConfigError);
    }

    TEST_CASE("pretrain deltas match a direct recomputation") {
        auto ds = testutil::toy_dataset({12, 9, 15});
        ds.shards[2].train = ds.shards[0].train;
        ClusterConfig cfg;
        cfg.pretrain = {0.05, 4, 2};
        cfg.seed = 21;
        const auto w0 = ModelParams::zeros(3, 4);
        const auto deltas = pretrain_deltas(ds, w0, cfg);
        REQUIRE(deltas.size() == 3);
        for (int k = 0; k < 3; ++k) {
            const auto direct = flatten_delta(client_update(w0, ds.shards[k].train, cfg.pretrain, pretrain_seed(cfg)), w0);
            CHECK(deltas[k].values == direct.values);
        }
        CHECK(deltas[0].values == deltas[2].values);
    }

    TEST_CASE("cluster_clients end to end is deterministic") {
        const auto ds = testutil::toy_dataset({10, 12, 14, 16, 18, 20});
        std::vector<ClientProfile> profiles;
        for (int k = 0; k < 6; ++k) {
            ClientProfile p;
            p.client_id = k;
            p.data_size = static_cast<std::int64_t>(ds.shards[k].train.size());
            p.x_ms_per_sample = k < 3 ? 1.0 : 20.0;
            p.mu = 1.0;
            profiles.push_back(p);
        }
        ClusterConfig cfg;
        cfg.n_groups = 2;
        cfg.normalization = Normalization::stddev;
        cfg.beta = 5.0;
        const auto r1 = cluster_clients(ds, profiles, RadioSystem{}, cfg);
        const auto r2 = cluster_clients(ds, profiles, RadioSystem{}, cfg);
        CHECK(r1.assignment == r2.assignment);
        CHECK(r1.affinity.entries.is_symmetric());
        // Latency dominates the rows here, so slow and fast clients separate.
        CHECK(as_partition(r1.assignment.group_of) == as_partition({0, 0, 0, 1, 1, 1}));
    }
}
