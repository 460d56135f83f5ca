#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csafl/dataset.hpp"
#include "csafl/rng.hpp"

namespace csafl {

// Latencies are in milliseconds throughout. `x_ms_per_sample` is the shift of
// the computation-time distribution, `mu` its rate in samples/ms so that
// data_size / mu is a duration in ms.
struct ClientProfile {
    int client_id = 0;
    std::int64_t data_size = 1;
    double x_ms_per_sample = 1.0;
    double mu = 1.0;
    double power_dbm = 23.0;
    double bandwidth_share = 0.1;
    double distance_km = 0.5;

    void validate() const;
};

enum class NoiseBandwidth { allocated, total };

struct RadioSystem {
    double total_bandwidth_hz = 1e6;
    double noise_dbm_per_hz = -174.0;
    double model_size_bits = 1e5;
    NoiseBandwidth noise_bandwidth = NoiseBandwidth::allocated;

    void validate() const;
};

inline constexpr double kSnrFloorDb = -50.0;
inline constexpr double kSnrCeilDb = 150.0;

double path_loss_db(double distance_km);

// P[t_cp < t] for the shifted exponential.
double computation_latency_cdf(const ClientProfile& p, double t_ms);
double sample_computation_latency(const ClientProfile& p, Rng& rng);
double expected_computation_latency(const ClientProfile& p);

// Link budget in dB, clamped to [kSnrFloorDb, kSnrCeilDb].
double snr_db(const ClientProfile& p, const RadioSystem& sys);
double uplink_rate_bps(const ClientProfile& p, const RadioSystem& sys);
double communication_latency(const ClientProfile& p, const RadioSystem& sys);

enum class LatencyMode { expected, sampled };

// `rng` is required (non-null) iff mode == sampled.
double total_update_latency(const ClientProfile& p, const RadioSystem& sys, LatencyMode mode, Rng* rng = nullptr);

enum class Normalization { variance, stddev };

// (t - mean) / var (or / stddev). Throws DegenerateInputError on zero spread
// and ContractError on fewer than two values.
std::vector<double> normalize_latencies(std::span<const double> latencies_ms,
                                        Normalization mode = Normalization::variance);

// Each client's expected computation latency is drawn log-uniformly, then
// split into the deterministic shift x*d and the exponential mean d/mu, so the
// latency spread does not follow the shard-size spread.
struct ProfileRanges {
    double compute_ms_min = 800.0, compute_ms_max = 12000.0;
    double shift_fraction_min = 0.5, shift_fraction_max = 0.9;  // x*d over the expected latency
    double power_min = 10.0, power_max = 23.0;
    double share_min = 0.02, share_max = 0.1;
    double distance_min = 0.1, distance_max = 1.0;

    void validate() const;
};

// One profile per client; data_size is the client's train split size.
std::vector<ClientProfile> generate_profiles(const FederatedDataset& ds, const ProfileRanges& ranges, std::uint64_t seed);

}  // namespace csafl
