#include "csafl/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>

#include "csafl/errors.hpp"
#include "csafl/metrics.hpp"

namespace csafl {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kLatencyStream = 0x6c6174656eULL;
constexpr std::uint64_t kSelectStream = 0x73656c6563ULL;
constexpr std::uint64_t kRandomGroupStream = 0x72616e6467ULL;

constexpr std::array<Protocol, 7> kProtocols = {Protocol::t_fedavg,  Protocol::ta_fedavg,  Protocol::g_fedavg,
                                                Protocol::ga_fedavg, Protocol::r_fedavg,   Protocol::nog_fedavg,
                                                Protocol::csafl};

// Events sort by time; at equal times uploads precede downloads, then client id.
void sort_events(std::vector<CommitEvent>& events) {
    auto key = [](const CommitEvent& e) {
        return std::make_tuple(e.time_ms, e.kind == EventKind::download ? 1 : 0, e.client_id);
    };
    std::stable_sort(events.begin(), events.end(),
                     [&](const CommitEvent& a, const CommitEvent& b) { return key(a) < key(b); });
}

std::vector<int> sorted_unique(std::span<const int> selected, const RoundContext& ctx) {
    if (selected.empty()) {
        throw ContractError("a round needs at least one selected client");
    }
    if (ctx.data == nullptr || !ctx.latency) {
        throw ContractError("round context needs a dataset and a latency source");
    }
    if (!(ctx.budget_ms > 0.0)) {
        throw ContractError("round budget must be positive");
    }
    std::vector<int> ids(selected.begin(), selected.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw ContractError("selected clients must be distinct");
    }
    for (int c : ids) ctx.data->shard(c);
    return ids;
}

double checked_latency(const RoundContext& ctx, int client, int update_index) {
    const double lat = ctx.latency(client, update_index);
    if (!(lat > 0.0) || !std::isfinite(lat)) {
        throw ContractError("latency for client " + std::to_string(client) + " must be positive and finite");
    }
    return lat;
}

ModelParams train(const RoundContext& ctx, int client, const ModelParams& start, int update_index) {
    return client_update(start, ctx.data->shard(client).train, ctx.training,
                         update_seed(ctx.seed, ctx.round, client, update_index));
}

void apply_commit(ModelParams& group_model, const ModelParams& client_model, const CommitMode& mode) {
    if (mode.kind == CommitMode::Kind::replace) {
        group_model = client_model;
    } else {
        group_model = mix_models(group_model, client_model, mode.alpha);
    }
}

struct Flight {
    double finish = 0.0;
    int client = 0;
    bool sync = false;
};

struct LaterFirst {
    bool operator()(const Flight& a, const Flight& b) const {
        return std::tie(a.finish, a.client) > std::tie(b.finish, b.client);
    }
};

using FlightQueue = std::priority_queue<Flight, std::vector<Flight>, LaterFirst>;

// Event-driven state machine for one group's round under the semi-asynchronous
// rule. Every client with budget left is either training (one Flight in the
// queue) or parked at a forming barrier.
class SemiAsyncRound {
public:
    SemiAsyncRound(GroupState group, std::vector<int> selected, const RoundContext& ctx)
        : ctx_(ctx), selected_(std::move(selected)) {
        result_.group = std::move(group);
        result_.group.version = 0;
        for (int c : selected_) {
            Slot& s = slots_[c];
            s.w_last = result_.group.model;
            result_.idle_ms[c] = 0.0;
        }
    }

    RoundResult run() {
        for (int c : selected_) become_free(c, 0.0);
        while (!queue_.empty()) {
            const Flight f = queue_.top();
            queue_.pop();
            if (f.sync) {
                on_sync_done(f);
            } else {
                on_async_done(f);
            }
        }
        for (const auto& [c, s] : slots_) result_.versions[c] = s.version;
        sort_events(result_.events);
        return std::move(result_);
    }

private:
    struct Slot {
        ModelParams w_last;
        ModelParams in_flight;
        ClientVersion version;
        int updates = 0;
        bool done = false;
        double sync_finish = 0.0;
    };

    struct Barrier {
        bool active = false;
        std::set<int> pending;  // still training asynchronously; join when free
        std::vector<int> joined;
        int outstanding = 0;
        double latest = 0.0;
    };

    long& group_version() { return result_.group.version; }

    void emit(double t, int client, EventKind kind) {
        result_.events.push_back({t, ctx_.round, result_.group.group_id, client, kind, group_version()});
    }

    void start_update(int c, double t, bool sync) {
        Slot& s = slots_.at(c);
        const int idx = s.updates++;
        const double lat = checked_latency(ctx_, c, idx);
        const ModelParams& base = (ctx_.pull_on_commit && !sync) ? result_.group.model : s.w_last;
        result_.starts.push_back({t, ctx_.round, result_.group.group_id, c, s.version.v_new - s.version.v_prev, sync});
        s.in_flight = train(ctx_, c, base, idx);
        queue_.push({t + lat, c, sync});
    }

    void join_barrier(int c, double t) {
        barrier_.joined.push_back(c);
        ++barrier_.outstanding;
        start_update(c, t, true);
    }

    void become_free(int c, double t) {
        Slot& s = slots_.at(c);
        if (barrier_.active) {
            barrier_.pending.erase(c);
            if (t < ctx_.budget_ms) {
                join_barrier(c, t);
            } else {
                s.done = true;
                barrier_.latest = std::max(barrier_.latest, t);
                try_complete_barrier();
            }
            return;
        }
        if (t >= ctx_.budget_ms) {
            s.done = true;
            return;
        }
        const long delta_v = s.version.v_new - s.version.v_prev;
        if (delta_v > ctx_.delay_threshold) {
            ++result_.forced_syncs;
            barrier_.active = true;
            barrier_.latest = t;
            for (int other : selected_) {
                if (other != c && !slots_.at(other).done) barrier_.pending.insert(other);
            }
            join_barrier(c, t);
            return;
        }
        start_update(c, t, false);
    }

    void on_async_done(const Flight& f) {
        Slot& s = slots_.at(f.client);
        s.w_last = std::move(s.in_flight);
        apply_commit(result_.group.model, s.w_last, ctx_.commit_mode);
        ++group_version();
        s.version.v_prev = s.version.v_new;
        s.version.v_new = group_version();
        ++result_.commits;
        emit(f.finish, f.client, EventKind::async_commit);
        become_free(f.client, f.finish);
    }

    void on_sync_done(const Flight& f) {
        Slot& s = slots_.at(f.client);
        s.w_last = std::move(s.in_flight);
        s.sync_finish = f.finish;
        ++group_version();
        ++result_.commits;
        emit(f.finish, f.client, EventKind::sync_barrier);
        --barrier_.outstanding;
        barrier_.latest = std::max(barrier_.latest, f.finish);
        try_complete_barrier();
    }

    void try_complete_barrier() {
        if (!barrier_.active || !barrier_.pending.empty() || barrier_.outstanding != 0) return;
        const double t = barrier_.latest;
        std::vector<int> joined = std::move(barrier_.joined);
        std::sort(joined.begin(), joined.end());
        barrier_ = Barrier{};

        std::vector<WeightedModel> parts;
        for (int c : joined) {
            parts.push_back({&slots_.at(c).w_last, ctx_.data->shard(c).train.size()});
        }
        ModelParams aggregate = fedavg_aggregate(parts);
        ++result_.barriers;
        for (int c : joined) {
            Slot& s = slots_.at(c);
            s.w_last = aggregate;
            s.version.v_prev = group_version();
            s.version.v_new = group_version();
            result_.idle_ms[c] += t - s.sync_finish;
            emit(t, c, EventKind::download);
        }
        result_.group.model = std::move(aggregate);
        for (int c : joined) become_free(c, t);
    }

    const RoundContext& ctx_;
    std::vector<int> selected_;
    RoundResult result_;
    std::map<int, Slot> slots_;
    FlightQueue queue_;
    Barrier barrier_;
};

}  // namespace

std::string_view protocol_name(Protocol p) {
    switch (p) {
        case Protocol::t_fedavg: return "T_FEDAVG";
        case Protocol::ta_fedavg: return "TA_FEDAVG";
        case Protocol::g_fedavg: return "G_FEDAVG";
        case Protocol::ga_fedavg: return "GA_FEDAVG";
        case Protocol::r_fedavg: return "R_FEDAVG";
        case Protocol::nog_fedavg: return "NOG_FEDAVG";
        case Protocol::csafl: return "CSAFL";
    }
    return "UNKNOWN";
}

Protocol parse_protocol(std::string_view name) {
    std::string upper(name);
    for (char& ch : upper) {
        if (ch == '-') ch = '_';
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    for (Protocol p : kProtocols) {
        if (protocol_name(p) == upper) return p;
    }
    throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

std::span<const Protocol> all_protocols() { return kProtocols; }

std::string_view update_rule_name(UpdateRule r) {
    switch (r) {
        case UpdateRule::sync: return "sync";
        case UpdateRule::async: return "async";
        case UpdateRule::semi_async: return "semi_async";
    }
    return "unknown";
}

UpdateRule parse_update_rule(std::string_view name) {
    for (UpdateRule r : {UpdateRule::sync, UpdateRule::async, UpdateRule::semi_async}) {
        if (update_rule_name(r) == name) return r;
    }
    throw ConfigError("unknown update rule '" + std::string(name) + "'");
}

std::string_view event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::async_commit: return "async_commit";
        case EventKind::sync_barrier: return "sync_barrier";
        case EventKind::download: return "download";
    }
    return "unknown";
}

void ProtocolConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (!(budget_ms > 0.0) || !std::isfinite(budget_ms)) throw ConfigError("budget_ms must be > 0");
    if (delay_threshold < 0) throw ConfigError("delay_threshold must be >= 0");
    if (clients_per_round < 1) throw ConfigError("clients_per_round must be >= 1");
    if (commit_mode.kind == CommitMode::Kind::mix && !(commit_mode.alpha > 0.0 && commit_mode.alpha <= 1.0)) {
        throw ConfigError("commit mix weight must lie in (0, 1]");
    }
    if (random_grouping_rule == UpdateRule::async) {
        throw ConfigError("random grouping rule must be sync or semi_async");
    }
    training.validate();
}

UpdateRule update_rule_for(const ProtocolConfig& cfg) {
    switch (cfg.protocol) {
        case Protocol::t_fedavg:
        case Protocol::g_fedavg: return UpdateRule::sync;
        case Protocol::ta_fedavg:
        case Protocol::ga_fedavg: return UpdateRule::async;
        case Protocol::r_fedavg: return cfg.random_grouping_rule;
        case Protocol::nog_fedavg:
        case Protocol::csafl: return UpdateRule::semi_async;
    }
    return UpdateRule::semi_async;
}

bool uses_clustered_groups(Protocol p) {
    return p == Protocol::g_fedavg || p == Protocol::ga_fedavg || p == Protocol::csafl;
}

std::uint64_t update_seed(std::uint64_t base, int round, int client_id, int update_index) {
    return derive_seed(base, {kTrainStream, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client_id),
                              static_cast<std::uint64_t>(update_index)});
}

RoundResult run_round_sync(GroupState group, std::span<const int> selected, const RoundContext& ctx) {
    const std::vector<int> ids = sorted_unique(selected, ctx);
    RoundResult r;
    r.group = std::move(group);
    r.group.version = 0;
    std::map<int, int> updates;
    for (int c : ids) {
        r.idle_ms[c] = 0.0;
        r.versions[c] = {};
    }

    double now = 0.0;
    while (now < ctx.budget_ms) {
        struct Upload {
            double finish;
            int client;
            ModelParams model;
        };
        std::vector<Upload> uploads;
        for (int c : ids) {
            const int idx = updates[c]++;
            const double lat = checked_latency(ctx, c, idx);
            r.starts.push_back({now, ctx.round, r.group.group_id, c, r.versions[c].v_new - r.versions[c].v_prev, true});
            uploads.push_back({now + lat, c, train(ctx, c, r.group.model, idx)});
        }
        std::sort(uploads.begin(), uploads.end(),
                  [](const Upload& a, const Upload& b) { return std::tie(a.finish, a.client) < std::tie(b.finish, b.client); });
        std::vector<WeightedModel> parts;
        for (const auto& u : uploads) {
            ++r.group.version;
            ++r.commits;
            r.events.push_back({u.finish, ctx.round, r.group.group_id, u.client, EventKind::sync_barrier, r.group.version});
        }
        std::sort(uploads.begin(), uploads.end(), [](const Upload& a, const Upload& b) { return a.client < b.client; });
        double barrier = now;
        for (const auto& u : uploads) {
            parts.push_back({&u.model, ctx.data->shard(u.client).train.size()});
            barrier = std::max(barrier, u.finish);
        }
        r.group.model = fedavg_aggregate(parts);
        ++r.barriers;
        for (const auto& u : uploads) {
            r.idle_ms[u.client] += barrier - u.finish;
            r.versions[u.client] = {r.group.version, r.group.version};
            r.events.push_back({barrier, ctx.round, r.group.group_id, u.client, EventKind::download, r.group.version});
        }
        now = barrier;
    }
    sort_events(r.events);
    return r;
}

RoundResult run_round_async(GroupState group, std::span<const int> selected, const RoundContext& ctx) {
    const std::vector<int> ids = sorted_unique(selected, ctx);
    RoundResult r;
    r.group = std::move(group);
    r.group.version = 0;

    struct Client {
        ModelParams w_last;
        ModelParams in_flight;
        int updates = 0;
    };
    std::map<int, Client> clients;
    FlightQueue queue;

    auto start = [&](int c, double t) {
        Client& cl = clients[c];
        const int idx = cl.updates++;
        const double lat = checked_latency(ctx, c, idx);
        const ClientVersion& v = r.versions[c];
        r.starts.push_back({t, ctx.round, r.group.group_id, c, v.v_new - v.v_prev, false});
        cl.in_flight = train(ctx, c, ctx.pull_on_commit ? r.group.model : cl.w_last, idx);
        queue.push({t + lat, c, false});
    };

    for (int c : ids) {
        clients[c].w_last = r.group.model;
        r.idle_ms[c] = 0.0;
        r.versions[c] = {};
    }
    for (int c : ids) start(c, 0.0);

    while (!queue.empty()) {
        const Flight f = queue.top();
        queue.pop();
        Client& cl = clients[f.client];
        cl.w_last = std::move(cl.in_flight);
        apply_commit(r.group.model, cl.w_last, ctx.commit_mode);
        ++r.group.version;
        ++r.commits;
        ClientVersion& v = r.versions[f.client];
        v.v_prev = v.v_new;
        v.v_new = r.group.version;
        r.events.push_back({f.finish, ctx.round, r.group.group_id, f.client, EventKind::async_commit, r.group.version});
        if (f.finish < ctx.budget_ms) start(f.client, f.finish);
    }
    sort_events(r.events);
    return r;
}

RoundResult run_round_csafl(GroupState group, std::span<const int> selected, const RoundContext& ctx) {
    return SemiAsyncRound(std::move(group), sorted_unique(selected, ctx), ctx).run();
}

std::vector<int> select_clients(std::span<const int> all_ids, int k, Rng& rng) {
    if (k < 1 || static_cast<std::size_t>(k) > all_ids.size()) {
        throw ConfigError("cannot select " + std::to_string(k) + " clients out of " + std::to_string(all_ids.size()));
    }
    std::vector<int> pool(all_ids.begin(), all_ids.end());
    const auto n = pool.size();
    const auto kk = static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < kk; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(kk);
    std::sort(pool.begin(), pool.end());
    return pool;
}

LatencyFn make_latency_fn(std::span<const ClientProfile> profiles,
                          const RadioSystem& sys,
                          const ProtocolConfig& cfg,
                          int round) {
    std::vector<double> comm(profiles.size());
    std::vector<double> expected(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        comm[i] = communication_latency(profiles[i], sys);
        expected[i] = comm[i] + expected_computation_latency(profiles[i]);
    }
    std::vector<ClientProfile> owned(profiles.begin(), profiles.end());
    const LatencyMode mode = cfg.latency_mode;
    const bool redraw = cfg.redraw_latency_per_update;
    const std::uint64_t seed = cfg.seed;
    return [owned = std::move(owned), comm = std::move(comm), expected = std::move(expected), mode, redraw, seed,
            round](int client, int update_index) {
        const auto idx = static_cast<std::size_t>(client);
        if (mode == LatencyMode::expected) return expected.at(idx);
        Rng rng(derive_seed(seed, {kLatencyStream, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client),
                                   static_cast<std::uint64_t>(redraw ? update_index : 0)}));
        return comm.at(idx) + sample_computation_latency(owned.at(idx), rng);
    };
}

SimulationTrace run_experiment(const FederatedDataset& ds,
                               const GroupAssignment& assignment,
                               std::span<const ClientProfile> profiles,
                               const RadioSystem& sys,
                               const ProtocolConfig& cfg) {
    cfg.validate();
    sys.validate();
    try {
        ds.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    }
    const int n_clients = static_cast<int>(ds.num_clients());
    if (assignment.group_of.size() != ds.num_clients()) {
        throw ConfigError("assignment covers " + std::to_string(assignment.group_of.size()) + " clients but the dataset has " +
                          std::to_string(n_clients));
    }
    assignment.validate();
    if (profiles.size() != ds.num_clients()) {
        throw ConfigError("profiles cover " + std::to_string(profiles.size()) + " clients but the dataset has " +
                          std::to_string(n_clients));
    }
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].client_id != static_cast<int>(i)) {
            throw ConfigError("profiles must be ordered by client id; entry " + std::to_string(i) + " has id " +
                              std::to_string(profiles[i].client_id));
        }
        try {
            profiles[i].validate();
        } catch (const ContractError& e) {
            throw ConfigError(e.what());
        }
    }
    if (cfg.clients_per_round > n_clients) {
        throw ConfigError("clients_per_round=" + std::to_string(cfg.clients_per_round) + " exceeds the " +
                          std::to_string(n_clients) + " available clients");
    }

    SimulationTrace trace;
    trace.protocol = cfg.protocol;
    if (cfg.protocol == Protocol::r_fedavg) {
        trace.assignment = random_groups(n_clients, assignment.n_groups, derive_seed(cfg.seed, {kRandomGroupStream}));
    } else if (uses_clustered_groups(cfg.protocol)) {
        trace.assignment = assignment;
    } else {
        trace.assignment = single_group(n_clients);
    }
    const UpdateRule rule = update_rule_for(cfg);
    const auto members = trace.assignment.members();
    const auto n_groups = static_cast<std::size_t>(trace.assignment.n_groups);

    std::vector<GroupState> groups(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g) {
        groups[g].group_id = static_cast<int>(g);
        groups[g].members = members[g];
        groups[g].model = ModelParams::zeros(static_cast<std::size_t>(ds.num_classes), static_cast<std::size_t>(ds.feature_dim));
    }

    std::vector<int> all_ids(static_cast<std::size_t>(n_clients));
    for (int c = 0; c < n_clients; ++c) all_ids[static_cast<std::size_t>(c)] = c;

    for (int round = 1; round <= cfg.rounds; ++round) {
        Rng select_rng(derive_seed(cfg.seed, {kSelectStream, static_cast<std::uint64_t>(round)}));
        const std::vector<int> selected = select_clients(all_ids, cfg.clients_per_round, select_rng);
        std::vector<std::vector<int>> per_group(n_groups);
        for (int c : selected) {
            per_group[static_cast<std::size_t>(trace.assignment.group_of[static_cast<std::size_t>(c)])].push_back(c);
        }

        RoundContext ctx;
        ctx.data = &ds;
        ctx.training = cfg.training;
        ctx.latency = make_latency_fn(profiles, sys, cfg, round);
        ctx.budget_ms = cfg.budget_ms;
        ctx.delay_threshold = cfg.delay_threshold;
        ctx.commit_mode = cfg.commit_mode;
        ctx.pull_on_commit = cfg.pull_on_commit;
        ctx.seed = cfg.seed;
        ctx.round = round;

        std::vector<GroupEvaluationInput> eval_inputs;
        std::vector<GroupRoundMetrics> round_metrics(n_groups);
        for (std::size_t g = 0; g < n_groups; ++g) {
            GroupRoundMetrics& m = round_metrics[g];
            m.round = round;
            m.group_id = static_cast<int>(g);
            m.selected = static_cast<int>(per_group[g].size());
            if (per_group[g].empty()) continue;
            RoundResult res;
            switch (rule) {
                case UpdateRule::sync: res = run_round_sync(std::move(groups[g]), per_group[g], ctx); break;
                case UpdateRule::async: res = run_round_async(std::move(groups[g]), per_group[g], ctx); break;
                case UpdateRule::semi_async: res = run_round_csafl(std::move(groups[g]), per_group[g], ctx); break;
            }
            groups[g] = std::move(res.group);
            m.commits = res.commits;
            m.forced_syncs = res.forced_syncs;
            trace.events.insert(trace.events.end(), res.events.begin(), res.events.end());
            trace.starts.insert(trace.starts.end(), res.starts.begin(), res.starts.end());
            for (const auto& [client, idle] : res.idle_ms) {
                trace.idle.push_back({round, static_cast<int>(g), client, idle});
            }
        }

        std::size_t total_correct = 0;
        std::size_t total_samples = 0;
        double total_loss = 0.0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            GroupEvaluationInput in{&groups[g].model, {}};
            for (int c : groups[g].members) in.test_shards.push_back(ds.shard(c).test);
            const GroupEvaluation ev = evaluate_group(in);
            GroupRoundMetrics& m = round_metrics[g];
            m.correct = ev.correct;
            m.test_samples = ev.samples;
            m.accuracy = ev.accuracy();
            m.mean_loss = ev.samples > 0 ? ev.loss_sum / static_cast<double>(ev.samples) : 0.0;
            total_correct += ev.correct;
            total_samples += ev.samples;
            total_loss += ev.loss_sum;
        }
        if (total_samples == 0) {
            throw DegenerateInputError("no test samples to evaluate");
        }
        trace.metrics.insert(trace.metrics.end(), round_metrics.begin(), round_metrics.end());
        trace.rounds.push_back({round, static_cast<double>(total_correct) / static_cast<double>(total_samples),
                                total_loss / static_cast<double>(total_samples)});
    }
    for (auto& g : groups) trace.final_models.push_back(std::move(g.model));
    return trace;
}

}  // namespace csafl
