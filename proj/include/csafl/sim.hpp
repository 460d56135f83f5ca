#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csafl/cluster.hpp"
#include "csafl/dataset.hpp"
#include "csafl/latency.hpp"
#include "csafl/model.hpp"
#include "csafl/rng.hpp"

namespace csafl {

enum class Protocol { t_fedavg, ta_fedavg, g_fedavg, ga_fedavg, r_fedavg, nog_fedavg, csafl };

std::string_view protocol_name(Protocol p);  // "T_FEDAVG", ...
Protocol parse_protocol(std::string_view name);
std::span<const Protocol> all_protocols();

// How selected clients inside one group interact during a round.
enum class UpdateRule { sync, async, semi_async };

std::string_view update_rule_name(UpdateRule r);
UpdateRule parse_update_rule(std::string_view name);

// What an asynchronous commit does to the group model.
struct CommitMode {
    enum class Kind { replace, mix };
    Kind kind = Kind::replace;
    double alpha = 0.5;  // mix weight of the incoming client model
};

struct ProtocolConfig {
    Protocol protocol = Protocol::csafl;
    int rounds = 200;
    double budget_ms = 15000.0;
    int delay_threshold = 4;
    int clients_per_round = 20;
    TrainingConfig training;
    std::uint64_t seed = 0;
    CommitMode commit_mode;
    bool pull_on_commit = false;
    LatencyMode latency_mode = LatencyMode::sampled;
    bool redraw_latency_per_update = true;  // false: one draw per client per round
    UpdateRule random_grouping_rule = UpdateRule::semi_async;

    void validate() const;
};

UpdateRule update_rule_for(const ProtocolConfig& cfg);
bool uses_clustered_groups(Protocol p);

enum class EventKind { async_commit, sync_barrier, download };

std::string_view event_kind_name(EventKind k);

struct CommitEvent {
    double time_ms = 0.0;  // relative to the round start
    int round = 0;
    int group_id = 0;
    int client_id = 0;
    EventKind kind = EventKind::async_commit;
    long group_version = 0;

    friend bool operator==(const CommitEvent&, const CommitEvent&) = default;
};

// Logged whenever a client begins a local update; `delta_v` is the version gap
// the client observed at that moment.
struct UpdateStart {
    double time_ms = 0.0;
    int round = 0;
    int group_id = 0;
    int client_id = 0;
    long delta_v = 0;
    bool synchronous = false;

    friend bool operator==(const UpdateStart&, const UpdateStart&) = default;
};

struct ClientVersion {
    long v_prev = 0;
    long v_new = 0;
};

struct GroupState {
    int group_id = 0;
    std::vector<int> members;
    ModelParams model;
    long version = 0;
};

// Latency (ms) of the `update_index`-th local update of `client_id` this round.
using LatencyFn = std::function<double(int client_id, int update_index)>;

struct RoundContext {
    const FederatedDataset* data = nullptr;
    TrainingConfig training;
    LatencyFn latency;
    double budget_ms = 15000.0;
    int delay_threshold = 4;
    CommitMode commit_mode;
    bool pull_on_commit = false;
    std::uint64_t seed = 0;
    int round = 1;
};

// Seed for the SGD shuffles of one local update.
std::uint64_t update_seed(std::uint64_t base, int round, int client_id, int update_index);

struct RoundResult {
    GroupState group;
    std::vector<CommitEvent> events;  // ordered by (time, uploads before downloads, client id)
    std::map<int, double> idle_ms;    // every selected client, waiting at sync barriers
    std::vector<UpdateStart> starts;
    std::map<int, ClientVersion> versions;  // final per-client counters
    int commits = 0;       // model uploads, async or at a barrier
    int forced_syncs = 0;  // barriers triggered by the staleness threshold
    int barriers = 0;      // all synchronous aggregations
};

// Synchronous inner iterations inside the budget: everyone trains from the
// group model, the barrier waits for the slowest, FedAvg, everyone downloads.
RoundResult run_round_sync(GroupState group, std::span<const int> selected, const RoundContext& ctx);

// Each client loops train -> commit on its own clock; every commit refreshes
// the group model. No waiting, so idle time is zero.
RoundResult run_round_async(GroupState group, std::span<const int> selected, const RoundContext& ctx);

// Asynchronous commits with version counters; a client whose gap between its
// last two commits exceeds the delay threshold forces every client with budget
// left into a synchronous FedAvg barrier.
RoundResult run_round_csafl(GroupState group, std::span<const int> selected, const RoundContext& ctx);

// Uniform sample without replacement, returned in ascending order.
std::vector<int> select_clients(std::span<const int> all_ids, int k, Rng& rng);

struct GroupRoundMetrics {
    int round = 0;
    int group_id = 0;
    double accuracy = 0.0;  // weighted over the group's member test samples
    double mean_loss = 0.0;
    std::size_t correct = 0;
    std::size_t test_samples = 0;
    int commits = 0;
    int forced_syncs = 0;
    int selected = 0;
};

struct RoundSummary {
    int round = 0;
    double weighted_accuracy = 0.0;
    double mean_loss = 0.0;
};

struct IdleRecord {
    int round = 0;
    int group_id = 0;
    int client_id = 0;
    double idle_ms = 0.0;
};

struct SimulationTrace {
    Protocol protocol = Protocol::csafl;
    GroupAssignment assignment;  // the grouping actually used
    std::vector<GroupRoundMetrics> metrics;  // rounds x groups
    std::vector<RoundSummary> rounds;
    std::vector<CommitEvent> events;
    std::vector<UpdateStart> starts;
    std::vector<IdleRecord> idle;
    std::vector<ModelParams> final_models;  // per group
};

// Builds the latency source used by run_experiment for one round.
LatencyFn make_latency_fn(std::span<const ClientProfile> profiles,
                          const RadioSystem& sys,
                          const ProtocolConfig& cfg,
                          int round);

// Ungrouped protocols replace `assignment` with one global group; R_FEDAVG
// replaces it with seeded random groups of the same count.
SimulationTrace run_experiment(const FederatedDataset& ds,
                               const GroupAssignment& assignment,
                               std::span<const ClientProfile> profiles,
                               const RadioSystem& sys,
                               const ProtocolConfig& cfg);

}  // namespace csafl
