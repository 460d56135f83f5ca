#include "csafl/latency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csafl/errors.hpp"

namespace csafl {

void ClientProfile::validate() const {
    const std::string who = "client " + std::to_string(client_id) + ": ";
    if (data_size < 1) throw ContractError(who + "data_size must be >= 1");
    if (!(x_ms_per_sample > 0.0)) throw ContractError(who + "x must be > 0");
    if (!(mu > 0.0)) throw ContractError(who + "mu must be > 0");
    if (!(bandwidth_share > 0.0 && bandwidth_share <= 1.0)) throw ContractError(who + "bandwidth share must lie in (0, 1]");
    if (!(distance_km > 0.0)) throw ContractError(who + "distance must be > 0");
    if (!std::isfinite(power_dbm)) throw ContractError(who + "power must be finite");
}

void RadioSystem::validate() const {
    if (!(total_bandwidth_hz > 0.0)) throw ContractError("radio: total bandwidth must be > 0");
    if (!(model_size_bits > 0.0)) throw ContractError("radio: model size must be > 0");
    if (!std::isfinite(noise_dbm_per_hz)) throw ContractError("radio: noise density must be finite");
}

double path_loss_db(double distance_km) {
    if (!(distance_km > 0.0)) throw ContractError("path loss needs a positive distance");
    return 100.7 + 23.5 * std::log10(distance_km);
}

double computation_latency_cdf(const ClientProfile& p, double t_ms) {
    p.validate();
    const double d = static_cast<double>(p.data_size);
    const double shift = p.x_ms_per_sample * d;
    if (t_ms < shift) return 0.0;
    return 1.0 - std::exp(-(p.mu / d) * (t_ms - shift));
}

double sample_computation_latency(const ClientProfile& p, Rng& rng) {
    p.validate();
    const double d = static_cast<double>(p.data_size);
    const double u = rng.uniform();
    return p.x_ms_per_sample * d - (d / p.mu) * std::log1p(-u);
}

double expected_computation_latency(const ClientProfile& p) {
    p.validate();
    const double d = static_cast<double>(p.data_size);
    return p.x_ms_per_sample * d + d / p.mu;
}

double snr_db(const ClientProfile& p, const RadioSystem& sys) {
    p.validate();
    sys.validate();
    const double noise_hz = sys.noise_bandwidth == NoiseBandwidth::allocated
                                ? p.bandwidth_share * sys.total_bandwidth_hz
                                : sys.total_bandwidth_hz;
    const double received_dbm = p.power_dbm - path_loss_db(p.distance_km);
    const double noise_dbm = sys.noise_dbm_per_hz + 10.0 * std::log10(noise_hz);
    return std::clamp(received_dbm - noise_dbm, kSnrFloorDb, kSnrCeilDb);
}

double uplink_rate_bps(const ClientProfile& p, const RadioSystem& sys) {
    const double snr_linear = std::pow(10.0, snr_db(p, sys) / 10.0);
    return p.bandwidth_share * sys.total_bandwidth_hz * std::log2(1.0 + snr_linear);
}

double communication_latency(const ClientProfile& p, const RadioSystem& sys) {
    return 1000.0 * sys.model_size_bits / uplink_rate_bps(p, sys);
}

double total_update_latency(const ClientProfile& p, const RadioSystem& sys, LatencyMode mode, Rng* rng) {
    const double comm = communication_latency(p, sys);
    if (mode == LatencyMode::expected) {
        return comm + expected_computation_latency(p);
    }
    if (rng == nullptr) {
        throw ContractError("sampled latency needs a random generator");
    }
    return comm + sample_computation_latency(p, *rng);
}

std::vector<double> normalize_latencies(std::span<const double> latencies_ms, Normalization mode) {
    if (latencies_ms.size() < 2) {
        throw ContractError("normalize_latencies needs at least two values");
    }
    const double n = static_cast<double>(latencies_ms.size());
    double mean = 0.0;
    for (double t : latencies_ms) mean += t;
    mean /= n;
    double var = 0.0;
    for (double t : latencies_ms) var += (t - mean) * (t - mean);
    var /= n;
    if (!(var > 0.0)) {
        throw DegenerateInputError("latencies have zero variance");
    }
    const double scale = mode == Normalization::variance ? var : std::sqrt(var);
    std::vector<double> out;
    out.reserve(latencies_ms.size());
    for (double t : latencies_ms) out.push_back((t - mean) / scale);
    return out;
}

void ProfileRanges::validate() const {
    auto check = [](double lo, double hi, const char* name) {
        if (!(lo <= hi)) throw ConfigError(std::string(name) + ": min must not exceed max");
    };
    check(compute_ms_min, compute_ms_max, "compute_ms");
    check(shift_fraction_min, shift_fraction_max, "shift_fraction");
    check(power_min, power_max, "power_dbm");
    check(share_min, share_max, "bandwidth_share");
    check(distance_min, distance_max, "distance_km");
    if (!(compute_ms_min > 0.0)) throw ConfigError("compute_ms: min must be > 0");
    if (!(shift_fraction_min > 0.0 && shift_fraction_max < 1.0)) {
        throw ConfigError("shift_fraction must lie in (0, 1)");
    }
    if (!(share_min > 0.0 && share_max <= 1.0)) throw ConfigError("bandwidth_share must lie in (0, 1]");
    if (!(distance_min > 0.0)) throw ConfigError("distance_km: min must be > 0");
}

std::vector<ClientProfile> generate_profiles(const FederatedDataset& ds, const ProfileRanges& ranges, std::uint64_t seed) {
    ranges.validate();
    std::vector<ClientProfile> out;
    out.reserve(ds.num_clients());
    for (const auto& shard : ds.shards) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(shard.client_id)}));
        auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
        ClientProfile p;
        p.client_id = shard.client_id;
        p.data_size = static_cast<std::int64_t>(shard.train.size());
        const double d = static_cast<double>(p.data_size);
        const double compute_ms = std::exp(uniform(std::log(ranges.compute_ms_min), std::log(ranges.compute_ms_max)));
        const double shift = uniform(ranges.shift_fraction_min, ranges.shift_fraction_max);
        p.x_ms_per_sample = shift * compute_ms / d;
        p.mu = d / ((1.0 - shift) * compute_ms);
        p.power_dbm = uniform(ranges.power_min, ranges.power_max);
        p.bandwidth_share = uniform(ranges.share_min, ranges.share_max);
        p.distance_km = uniform(ranges.distance_min, ranges.distance_max);
        p.validate();
        out.push_back(p);
    }
    return out;
}

}  // namespace csafl
