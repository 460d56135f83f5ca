#include <doctest.h>

#include <cmath>
#include <sstream>

#include "csafl/errors.hpp"
#include "csafl/model.hpp"
#include "csafl/rng.hpp"

using namespace csafl;

namespace {

ModelParams random_params(std::size_t c, std::size_t f, Rng& rng, double scale = 1.0) {
    auto p = ModelParams::zeros(c, f);
    for (auto& w : p.weights) w = rng.normal(0.0, scale);
    for (auto& b : p.bias) b = rng.normal(0.0, scale);
    return p;
}

std::vector<Sample> random_batch(std::size_t n, std::size_t c, std::size_t f, Rng& rng) {
    std::vector<Sample> out(n);
    for (auto& s : out) {
        s.features.resize(f);
        for (auto& x : s.features) x = rng.normal();
        s.label = static_cast<int>(rng.uniform_int(c));
    }
    return out;
}

// Straight-line mean cross-entropy, independent of the library's routine.
double reference_loss(const ModelParams& p, const std::vector<Sample>& batch) {
    double total = 0.0;
    for (const auto& s : batch) {
        std::vector<double> z(p.num_classes);
        double top = -INFINITY;
        for (std::size_t c = 0; c < p.num_classes; ++c) {
            z[c] = p.bias[c];
            for (std::size_t j = 0; j < p.feature_dim; ++j) z[c] += p.weights[c * p.feature_dim + j] * s.features[j];
            top = std::max(top, z[c]);
        }
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - top);
        total += top + std::log(sum) - z[static_cast<std::size_t>(s.label)];
    }
    return total / static_cast<double>(batch.size());
}

double& coordinate(ModelParams& p, std::size_t i) {
    return i < p.weights.size() ? p.weights[i] : p.bias[i - p.weights.size()];
}

}  // namespace

TEST_SUITE("model") {
    TEST_CASE("analytic gradient matches central finite differences") {
        Rng rng(2024);
        for (int instance = 0; instance < 20; ++instance) {
            const std::size_t c = 2 + rng.uniform_int(4);
            const std::size_t f = 1 + rng.uniform_int(8);
            auto params = random_params(c, f, rng);
            const auto batch = random_batch(7, c, f, rng);
            const auto lg = loss_and_gradient(params, batch);
            CHECK(lg.loss == doctest::Approx(reference_loss(params, batch)).epsilon(1e-12));
            for (std::size_t i = 0; i < params.parameter_count(); ++i) {
                const double h = 1e-5;
                const double saved = coordinate(params, i);
                coordinate(params, i) = saved + h;
                const double up = reference_loss(params, batch);
                coordinate(params, i) = saved - h;
                const double down = reference_loss(params, batch);
                coordinate(params, i) = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = coordinate(const_cast<ModelParams&>(lg.gradient), i);
                const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
                CHECK(rel <= 1e-4);
            }
        }
    }

    TEST_CASE("zero learning rate returns the start exactly") {
        Rng rng(1);
        const auto start = random_params(3, 4, rng);
        const auto batch = random_batch(13, 3, 4, rng);
        CHECK(client_update(start, batch, {0.0, 5, 3}, 8) == start);
    }

    TEST_CASE("one epoch with one full batch is one gradient step") {
        Rng rng(3);
        const auto start = random_params(4, 5, rng);
        const auto batch = random_batch(9, 4, 5, rng);
        const double lr = 0.1;
        const auto after = client_update(start, batch, {lr, 9, 1}, 4);
        auto expected = start;
        const auto g = loss_and_gradient(start, batch).gradient;
        for (std::size_t i = 0; i < expected.parameter_count(); ++i) {
            coordinate(expected, i) -= lr * coordinate(const_cast<ModelParams&>(g), i);
        }
        for (std::size_t i = 0; i < expected.parameter_count(); ++i) {
            CHECK(coordinate(const_cast<ModelParams&>(after), i) == doctest::Approx(coordinate(expected, i)).epsilon(1e-12));
        }
    }

    TEST_CASE("training loss decreases on a separable two-class set") {
        std::vector<Sample> data;
        Rng rng(6);
        for (int i = 0; i < 40; ++i) {
            const int label = i % 2;
            data.push_back({{(label ? 1.5 : -1.5) + rng.normal(0.0, 0.3), rng.normal()}, label});
        }
        const auto start = ModelParams::zeros(2, 2);
        const auto after = client_update(start, data, {0.03, 10, 10}, 1);
        CHECK(reference_loss(after, data) < reference_loss(start, data));
    }

    TEST_CASE("client_update is deterministic in its seed and rejects empty shards") {
        Rng rng(5);
        const auto start = random_params(3, 3, rng);
        const auto batch = random_batch(25, 3, 3, rng);
        CHECK(client_update(start, batch, {0.05, 4, 2}, 77) == client_update(start, batch, {0.05, 4, 2}, 77));
        CHECK_FALSE(client_update(start, batch, {0.05, 4, 2}, 77) == client_update(start, batch, {0.05, 4, 2}, 78));
        CHECK_THROWS_AS(client_update(start, std::vector<Sample>{}, {0.05, 4, 2}, 1), ContractError);
    }

    TEST_CASE("evaluate: perfect classifier, zero model, random model") {
        std::vector<Sample> data;
        for (int i = 0; i < 30; ++i) data.push_back({{i % 3 == 0 ? 1.0 : 0.0, i % 3 == 1 ? 1.0 : 0.0, i % 3 == 2 ? 1.0 : 0.0}, i % 3});
        auto perfect = ModelParams::zeros(3, 3);
        for (std::size_t c = 0; c < 3; ++c) perfect.weights[c * 3 + c] = 50.0;
        CHECK(evaluate(perfect, data).accuracy == 1.0);

        const auto zero = evaluate(ModelParams::zeros(3, 3), data);
        CHECK(zero.accuracy == doctest::Approx(1.0 / 3.0));  // ties go to class 0
        CHECK(zero.mean_loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));

        Rng rng(12);
        const auto params = random_params(10, 5, rng);
        std::vector<Sample> balanced;
        for (int i = 0; i < 10000; ++i) {
            Sample s;
            for (int j = 0; j < 5; ++j) s.features.push_back(rng.normal());
            s.label = i % 10;
            balanced.push_back(s);
        }
        CHECK(std::abs(evaluate(params, balanced).accuracy - 0.10) <= 0.02);
        CHECK_THROWS_AS(evaluate(params, std::vector<Sample>{}), ContractError);
    }

    TEST_CASE("loss is invariant to shifting every logit by a constant") {
        Rng rng(8);
        auto params = random_params(4, 3, rng);
        const auto batch = random_batch(20, 4, 3, rng);
        const double before = evaluate(params, batch).mean_loss;
        for (auto& b : params.bias) b += 123.0;
        CHECK(std::abs(evaluate(params, batch).mean_loss - before) <= 1e-10);
    }

    TEST_CASE("flatten_delta layout and identities") {
        auto after = ModelParams::zeros(2, 2);
        after.weights = {1, 2, 3, 4};
        after.bias = {5, 6};
        const auto zero = ModelParams::zeros(2, 2);
        CHECK(flatten_delta(after, zero).values == std::vector<double>{1, 2, 3, 4, 5, 6});
        CHECK(flatten_delta(after, after).values == std::vector<double>(6, 0.0));
        CHECK_THROWS_AS(flatten_delta(after, ModelParams::zeros(3, 2)), ContractError);
    }

    TEST_CASE("fedavg weights by sample count") {
        auto three = ModelParams::zeros(1, 1);
        three.weights = {3.0};
        three.bias = {3.0};
        const auto zero = ModelParams::zeros(1, 1);
        const std::vector<WeightedModel> equal = {{&three, 5}, {&zero, 5}};
        CHECK(fedavg_aggregate(equal).weights[0] == doctest::Approx(1.5));
        const std::vector<WeightedModel> two_to_one = {{&three, 2}, {&zero, 1}};
        CHECK(fedavg_aggregate(two_to_one).weights[0] == doctest::Approx(2.0));
        const std::vector<WeightedModel> single = {{&three, 4}};
        CHECK(fedavg_aggregate(single) == three);
        const std::vector<WeightedModel> swapped = {{&zero, 1}, {&three, 2}};
        CHECK(fedavg_aggregate(swapped).weights[0] == doctest::Approx(2.0));
        CHECK_THROWS_AS(fedavg_aggregate(std::vector<WeightedModel>{}), ContractError);
        const std::vector<WeightedModel> weightless = {{&three, 0}};
        CHECK_THROWS_AS(fedavg_aggregate(weightless), ContractError);
    }

    TEST_CASE("mix_models interpolates") {
        auto a = ModelParams::zeros(1, 1);
        auto b = ModelParams::zeros(1, 1);
        b.weights = {4.0};
        CHECK(mix_models(a, b, 0.25).weights[0] == doctest::Approx(1.0));
    }

    TEST_CASE("model text round-trip is exact") {
        Rng rng(4);
        const auto p = random_params(3, 5, rng);
        std::stringstream ss;
        write_model(ss, p);
        CHECK(read_model(ss) == p);
    }
}
