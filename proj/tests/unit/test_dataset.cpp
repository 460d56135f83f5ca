#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "csafl/dataset.hpp"
#include "csafl/errors.hpp"
#include "csafl/synthetic.hpp"
#include "helpers.hpp"

using namespace csafl;

namespace {

SyntheticConfig small_synthetic(double alpha, double beta, std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.num_clients = 12;
    cfg.feature_dim = 6;
    cfg.num_classes = 4;
    cfg.sizes = {5, 1.1, 400};
    cfg.seed = seed;
    return cfg;
}

std::vector<Sample> labelled_pool(int classes, int per_class) {
    std::vector<Sample> pool;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i) pool.push_back({{double(c), double(i)}, c});
    }
    return pool;
}

}  // namespace

TEST_SUITE("dataset") {
    TEST_CASE("power-law counts respect the floor and decrease") {
        const auto counts = power_law_counts({10, 1.1, 75349}, 100);
        REQUIRE(counts.size() == 100);
        std::size_t total = 0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            CHECK(counts[k] >= 10);
            if (k > 0) CHECK(counts[k] <= counts[k - 1]);
            total += counts[k];
        }
        // Rounding each client moves the total by at most half a sample each.
        CHECK(std::abs(static_cast<double>(total) - 75349.0) <= 50.0);
    }

    TEST_CASE("synthetic(0.8, 0.5) with 100 clients has 100 shards") {
        SyntheticConfig cfg;
        cfg.seed = 5;
        const auto ds = generate_synthetic(cfg);
        CHECK(ds.num_clients() == 100);
        CHECK(ds.num_classes == 10);
        CHECK(ds.feature_dim == 60);
        CHECK_NOTHROW(ds.validate());
    }

    TEST_CASE("alpha = beta = 0 gives every client the same ground-truth model") {
        const auto cfg = small_synthetic(0.0, 0.0, 3);
        const auto first = synthetic_client_model(cfg, 0);
        for (int k = 1; k < cfg.num_clients; ++k) {
            CHECK(synthetic_client_model(cfg, k).truth == first.truth);
        }
        const auto hetero = small_synthetic(0.8, 0.5, 3);
        CHECK_FALSE(synthetic_client_model(hetero, 0).truth == synthetic_client_model(hetero, 1).truth);
    }

    TEST_CASE("labels are the argmax of the client's ground-truth logits") {
        const auto cfg = small_synthetic(0.8, 0.5, 4);
        const auto ds = generate_synthetic(cfg);
        for (int k = 0; k < cfg.num_clients; ++k) {
            const auto m = synthetic_client_model(cfg, k);
            for (const auto* split : {&ds.shards[k].train, &ds.shards[k].test}) {
                for (const auto& s : *split) {
                    // Straight-line recomputation, lowest index wins ties.
                    int best = 0;
                    double best_z = -INFINITY;
                    for (int c = 0; c < cfg.num_classes; ++c) {
                        double z = m.truth.bias[c];
                        for (int j = 0; j < cfg.feature_dim; ++j) z += m.truth.weights[c * cfg.feature_dim + j] * s.features[j];
                        if (z > best_z) {
                            best_z = z;
                            best = c;
                        }
                    }
                    CHECK(s.label == best);
                }
            }
        }
    }

    TEST_CASE("generation is deterministic per seed") {
        CHECK(generate_synthetic(small_synthetic(0.8, 0.5, 9)) == generate_synthetic(small_synthetic(0.8, 0.5, 9)));
        CHECK_FALSE(generate_synthetic(small_synthetic(0.8, 0.5, 9)) == generate_synthetic(small_synthetic(0.8, 0.5, 10)));
    }

    TEST_CASE("test split follows test_fraction and keeps train nonempty") {
        const auto ds = generate_synthetic(small_synthetic(0.8, 0.5, 2));
        for (const auto& s : ds.shards) {
            const double n = static_cast<double>(s.train.size() + s.test.size());
            CHECK(std::abs(static_cast<double>(s.test.size()) - 0.2 * n) <= 0.5 + 1e-9);
            CHECK_FALSE(s.train.empty());
        }
    }

    TEST_CASE("partition: two classes per client on a 10-class pool") {
        const auto pool = labelled_pool(10, 60);
        const auto part = partition_by_power_law(pool, 20, 2, 0.2, 7);
        std::size_t assigned = 0;
        for (const auto& s : part.dataset.shards) {
            std::set<int> labels;
            for (const auto& x : s.train) labels.insert(x.label);
            for (const auto& x : s.test) labels.insert(x.label);
            CHECK(labels.size() <= 2);
            assigned += s.train.size() + s.test.size();
        }
        CHECK(assigned + part.dropped == pool.size());
    }

    TEST_CASE("partition: one client keeps only its classes and conserves samples") {
        const auto pool = labelled_pool(5, 8);
        const auto part = partition_by_power_law(pool, 1, 2, 0.25, 1);
        REQUIRE(part.dataset.num_clients() == 1);
        const auto& s = part.dataset.shards[0];
        CHECK(s.train.size() + s.test.size() == 16);
        CHECK(part.dropped == 24);
        for (const auto& x : s.train) CHECK(x.label < 2);
    }

    TEST_CASE("partition: too many classes per client is a configuration error") {
        const auto pool = labelled_pool(3, 5);
        CHECK_THROWS_AS(partition_by_power_law(pool, 2, 4, 0.2, 1), ConfigError);
    }

    TEST_CASE("save and load round-trip exactly") {
        const auto ds = generate_synthetic(small_synthetic(0.8, 0.5, 11));
        const auto path = testutil::temp_dir("dataset") / "ds.txt";
        save_dataset(ds, path);
        CHECK(load_dataset(path) == ds);
    }

    TEST_CASE("an empty dataset is rejected at save time") {
        FederatedDataset ds;
        ds.num_classes = 2;
        ds.feature_dim = 2;
        CHECK_THROWS_AS(save_dataset(ds, testutil::temp_dir("empty") / "x.txt"), ContractError);
    }

    TEST_CASE("a label outside [0, C) is a parse error with its line number") {
        const auto path = testutil::temp_dir("badlabel") / "ds.txt";
        {
            std::ofstream out(path);
            out << "dataset,2,2,1\nclient,0,1,0\n0,train,5,0.5,0.25\n";
        }
        try {
            load_dataset(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find(":3:") != std::string::npos);
        }
    }
}
