#include "csafl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "csafl/errors.hpp"
#include "csafl/synthetic.hpp"
#include "csafl/rng.hpp"
#include "csafl/text.hpp"

namespace csafl {

namespace {

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(items[i - 1], items[j]);
    }
}

void check_test_fraction(double test_fraction) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in [0, 1), got " + std::to_string(test_fraction));
    }
}

// Shuffles and splits one client's samples. The train split never ends up empty.
ClientShard split_shard(int client_id, std::vector<Sample> samples, double test_fraction, Rng& rng) {
    shuffle(samples, rng);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(samples.size())));
    if (!samples.empty()) {
        n_test = std::min(n_test, samples.size() - 1);
    }
    ClientShard shard;
    shard.client_id = client_id;
    shard.test.assign(std::make_move_iterator(samples.begin()),
                      std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_test)));
    shard.train.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_test)),
                       std::make_move_iterator(samples.end()));
    return shard;
}

int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace

std::size_t FederatedDataset::total_samples() const {
    std::size_t total = 0;
    for (const auto& s : shards) {
        total += s.train.size() + s.test.size();
    }
    return total;
}

const ClientShard& FederatedDataset::shard(int client_id) const {
    if (client_id < 0 || static_cast<std::size_t>(client_id) >= shards.size()) {
        throw ContractError("unknown client id " + std::to_string(client_id));
    }
    return shards[static_cast<std::size_t>(client_id)];
}

void FederatedDataset::validate() const {
    if (num_classes < 1 || feature_dim < 1) {
        throw ContractError("dataset needs num_classes >= 1 and feature_dim >= 1");
    }
    if (shards.empty()) {
        throw ContractError("dataset has no client shards");
    }
    for (std::size_t i = 0; i < shards.size(); ++i) {
        const auto& s = shards[i];
        if (s.client_id != static_cast<int>(i)) {
            throw ContractError("client ids must be contiguous from 0; shard " + std::to_string(i) +
                                " has id " + std::to_string(s.client_id));
        }
        if (s.train.empty()) {
            throw ContractError("client " + std::to_string(i) + " has an empty train split");
        }
        for (const auto* split : {&s.train, &s.test}) {
            for (const auto& sample : *split) {
                if (sample.features.size() != static_cast<std::size_t>(feature_dim)) {
                    throw ContractError("client " + std::to_string(i) + " has a sample of width " +
                                        std::to_string(sample.features.size()) + ", expected " +
                                        std::to_string(feature_dim));
                }
                if (sample.label < 0 || sample.label >= num_classes) {
                    throw ContractError("client " + std::to_string(i) + " has label " +
                                        std::to_string(sample.label) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
                }
            }
        }
    }
}

std::vector<std::size_t> power_law_counts(const PowerLaw& law, int num_clients) {
    if (num_clients < 1) {
        throw ConfigError("num_clients must be >= 1");
    }
    if (law.min_samples < 1) {
        throw ConfigError("power-law min must be >= 1");
    }
    if (!(law.exponent >= 0.0)) {
        throw ConfigError("power-law exponent must be >= 0");
    }
    const auto n = static_cast<std::int64_t>(num_clients);
    const std::int64_t floor_total = n * law.min_samples;
    const double spare = static_cast<double>(std::max<std::int64_t>(0, law.target_total - floor_total));
    double norm = 0.0;
    for (int k = 0; k < num_clients; ++k) {
        norm += std::pow(k + 1.0, -law.exponent);
    }
    const double scale = spare / norm;
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_clients));
    for (int k = 0; k < num_clients; ++k) {
        counts[static_cast<std::size_t>(k)] =
            static_cast<std::size_t>(law.min_samples + std::llround(scale * std::pow(k + 1.0, -law.exponent)));
    }
    return counts;
}

namespace {

void check_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_clients < 1) {
        throw ConfigError("num_clients must be >= 1");
    }
    if (cfg.feature_dim < 1 || cfg.num_classes < 1) {
        throw ConfigError("feature_dim and num_classes must be positive");
    }
    if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) {
        throw ConfigError("alpha and beta must be non-negative");
    }
    check_test_fraction(cfg.test_fraction);
}

}  // namespace

SyntheticClientModel synthetic_client_model(const SyntheticConfig& cfg, int client) {
    check_synthetic(cfg);
    if (client < 0 || client >= cfg.num_clients) {
        throw ContractError("client " + std::to_string(client) + " out of range");
    }
    const auto dim = static_cast<std::size_t>(cfg.feature_dim);
    const auto classes = static_cast<std::size_t>(cfg.num_classes);
    SyntheticClientModel out;
    out.truth = ModelParams::zeros(classes, dim);

    // With alpha == 0 every client labels with one shared model.
    Rng shared(derive_seed(cfg.seed, {0xffffffffULL}));
    for (auto& w : out.truth.weights) w = shared.normal();
    for (auto& b : out.truth.bias) b = shared.normal();

    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(client), 1}));
    const double model_mean = rng.normal(0.0, cfg.alpha);
    const double feature_center = rng.normal(0.0, cfg.beta);
    if (cfg.alpha > 0.0) {
        for (auto& w : out.truth.weights) w = rng.normal(model_mean, 1.0);
        for (auto& b : out.truth.bias) b = rng.normal(model_mean, 1.0);
    }
    out.feature_mean.resize(dim);
    for (auto& v : out.feature_mean) v = rng.normal(feature_center, 1.0);
    out.feature_sd.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        out.feature_sd[j] = std::pow(static_cast<double>(j + 1), -0.6);
    }
    return out;
}

FederatedDataset generate_synthetic(const SyntheticConfig& cfg) {
    check_synthetic(cfg);
    const auto counts = power_law_counts(cfg.sizes, cfg.num_clients);
    const auto dim = static_cast<std::size_t>(cfg.feature_dim);

    FederatedDataset ds;
    ds.num_classes = cfg.num_classes;
    ds.feature_dim = cfg.feature_dim;
    ds.shards.reserve(static_cast<std::size_t>(cfg.num_clients));

    std::vector<double> logits(static_cast<std::size_t>(cfg.num_classes));
    for (int k = 0; k < cfg.num_clients; ++k) {
        const SyntheticClientModel m = synthetic_client_model(cfg, k);
        Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(k), 2}));
        std::vector<Sample> samples(counts[static_cast<std::size_t>(k)]);
        for (auto& s : samples) {
            s.features.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                s.features[j] = rng.normal(m.feature_mean[j], m.feature_sd[j]);
            }
            m.truth.logits(s.features, logits);
            s.label = argmax(logits);
        }
        ds.shards.push_back(split_shard(k, std::move(samples), cfg.test_fraction, rng));
    }
    return ds;
}

PartitionResult partition_by_power_law(std::span<const Sample> pool,
                                       int num_clients,
                                       int classes_per_client,
                                       double test_fraction,
                                       std::uint64_t seed,
                                       double exponent) {
    if (pool.empty()) {
        throw ContractError("cannot partition an empty pool");
    }
    if (num_clients < 1) {
        throw ConfigError("num_clients must be >= 1");
    }
    check_test_fraction(test_fraction);
    if (!(exponent >= 0.0)) {
        throw ConfigError("power-law exponent must be >= 0");
    }

    const std::size_t dim = pool.front().features.size();
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].features.size() != dim) {
            throw ContractError("pool samples have inconsistent feature widths");
        }
        if (pool[i].label < 0) {
            throw ContractError("pool contains a negative label");
        }
        by_label[pool[i].label].push_back(i);
    }
    std::vector<int> labels;
    for (const auto& [label, idx] : by_label) labels.push_back(label);
    if (classes_per_client < 1 || static_cast<std::size_t>(classes_per_client) > labels.size()) {
        throw ConfigError("classes_per_client=" + std::to_string(classes_per_client) + " but the pool has " +
                          std::to_string(labels.size()) + " distinct labels");
    }

    Rng rng(seed);
    for (auto& [label, idx] : by_label) shuffle(idx, rng);

    // Client k holds labels k, k+1, ... (cyclically over the sorted label set).
    const auto n_clients = static_cast<std::size_t>(num_clients);
    const auto per_client = static_cast<std::size_t>(classes_per_client);
    std::map<int, std::vector<std::size_t>> holders;
    for (std::size_t k = 0; k < n_clients; ++k) {
        for (std::size_t j = 0; j < per_client; ++j) {
            holders[labels[(k + j) % labels.size()]].push_back(k);
        }
    }

    std::vector<std::vector<Sample>> assigned(n_clients);
    std::size_t dropped = 0;
    for (const auto& [label, idx] : by_label) {
        auto it = holders.find(label);
        if (it == holders.end()) {
            dropped += idx.size();
            continue;
        }
        const auto& owners = it->second;
        std::vector<std::size_t> alloc(owners.size(), 0);
        std::size_t remaining = idx.size();
        if (remaining >= owners.size()) {
            std::fill(alloc.begin(), alloc.end(), 1);
            remaining -= owners.size();
        }
        double weight_sum = 0.0;
        std::vector<double> weights(owners.size());
        for (std::size_t o = 0; o < owners.size(); ++o) {
            weights[o] = std::pow(static_cast<double>(owners[o] + 1), -exponent);
            weight_sum += weights[o];
        }
        // Largest-remainder rounding keeps the total exact.
        std::vector<std::pair<double, std::size_t>> fractions;
        std::size_t given = 0;
        for (std::size_t o = 0; o < owners.size(); ++o) {
            const double share = static_cast<double>(remaining) * weights[o] / weight_sum;
            const auto whole = static_cast<std::size_t>(std::floor(share));
            alloc[o] += whole;
            given += whole;
            fractions.emplace_back(share - static_cast<double>(whole), o);
        }
        std::stable_sort(fractions.begin(), fractions.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; r < remaining - given; ++r) {
            alloc[fractions[r].second] += 1;
        }
        std::size_t cursor = 0;
        for (std::size_t o = 0; o < owners.size(); ++o) {
            for (std::size_t c = 0; c < alloc[o]; ++c) {
                assigned[owners[o]].push_back(pool[idx[cursor++]]);
            }
        }
    }

    PartitionResult result;
    result.dropped = dropped;
    result.dataset.num_classes = labels.back() + 1;
    result.dataset.feature_dim = static_cast<int>(dim);
    for (std::size_t k = 0; k < n_clients; ++k) {
        if (assigned[k].empty()) {
            throw ConfigError("pool too small: client " + std::to_string(k) + " received no samples");
        }
        result.dataset.shards.push_back(split_shard(static_cast<int>(k), std::move(assigned[k]), test_fraction, rng));
    }
    return result;
}

void save_dataset(const FederatedDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot open dataset file for writing: " + path.string());
    }
    out << "dataset," << ds.num_classes << ',' << ds.feature_dim << ',' << ds.shards.size() << '\n';
    std::string line;
    for (const auto& shard : ds.shards) {
        out << "client," << shard.client_id << ',' << shard.train.size() << ',' << shard.test.size() << '\n';
        for (const auto& [split_name, split] : {std::pair{"train", &shard.train}, std::pair{"test", &shard.test}}) {
            for (const auto& s : *split) {
                line.clear();
                line += std::to_string(shard.client_id);
                line += ',';
                line += split_name;
                line += ',';
                line += std::to_string(s.label);
                for (double f : s.features) {
                    line += ',';
                    line += text::format_exact(f);
                }
                line += '\n';
                out << line;
            }
        }
    }
    if (!out) {
        throw ConfigError("failed writing dataset file: " + path.string());
    }
}

FederatedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open dataset file: " + path.string());
    }
    std::size_t line_no = 0;
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };

    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };

    if (!next_line()) {
        throw fail("missing dataset header");
    }
    auto header = text::split(line, ',');
    if (header.size() != 4 || header[0] != "dataset") {
        throw fail("expected 'dataset,<classes>,<features>,<clients>' header");
    }
    const auto classes = text::parse_int(header[1]);
    const auto dim = text::parse_int(header[2]);
    const auto clients = text::parse_int(header[3]);
    if (!classes || !dim || !clients || *classes < 1 || *dim < 1 || *clients < 1) {
        throw fail("dataset header fields must be positive integers");
    }

    FederatedDataset ds;
    ds.num_classes = static_cast<int>(*classes);
    ds.feature_dim = static_cast<int>(*dim);
    ds.shards.reserve(static_cast<std::size_t>(*clients));

    for (long long c = 0; c < *clients; ++c) {
        if (!next_line()) {
            throw fail("expected header for client " + std::to_string(c));
        }
        auto ch = text::split(line, ',');
        if (ch.size() != 4 || ch[0] != "client") {
            throw fail("expected 'client,<id>,<n_train>,<n_test>' record");
        }
        const auto id = text::parse_int(ch[1]);
        const auto n_train = text::parse_int(ch[2]);
        const auto n_test = text::parse_int(ch[3]);
        if (!id || !n_train || !n_test || *n_train < 0 || *n_test < 0) {
            throw fail("malformed client header");
        }
        if (*id != c) {
            throw fail("client id " + std::to_string(*id) + " out of order, expected " + std::to_string(c));
        }
        ClientShard shard;
        shard.client_id = static_cast<int>(c);
        const long long total = *n_train + *n_test;
        for (long long i = 0; i < total; ++i) {
            if (!next_line()) {
                throw fail("unexpected end of file inside client " + std::to_string(c));
            }
            auto fields = text::split(line, ',');
            if (fields.size() != static_cast<std::size_t>(3 + *dim)) {
                throw fail("sample record has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(3 + *dim));
            }
            const auto owner = text::parse_int(fields[0]);
            if (!owner || *owner != c) {
                throw fail("sample record belongs to a different client than its header");
            }
            const bool is_train = fields[1] == "train";
            if (!is_train && fields[1] != "test") {
                throw fail("split must be 'train' or 'test'");
            }
            if (is_train != (i < *n_train)) {
                throw fail("sample split does not match the client header counts");
            }
            const auto label = text::parse_int(fields[2]);
            if (!label || *label < 0 || *label >= *classes) {
                throw fail("label '" + std::string(fields[2]) + "' outside [0, " + std::to_string(*classes) + ")");
            }
            Sample s;
            s.label = static_cast<int>(*label);
            s.features.resize(static_cast<std::size_t>(*dim));
            for (long long j = 0; j < *dim; ++j) {
                const auto v = text::parse_double(fields[static_cast<std::size_t>(3 + j)]);
                if (!v || !std::isfinite(*v)) {
                    throw fail("feature " + std::to_string(j) + " is not a finite number");
                }
                s.features[static_cast<std::size_t>(j)] = *v;
            }
            (is_train ? shard.train : shard.test).push_back(std::move(s));
        }
        ds.shards.push_back(std::move(shard));
    }
    if (next_line()) {
        throw fail("trailing records after the last client");
    }
    try {
        ds.validate();
    } catch (const ContractError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace csafl
