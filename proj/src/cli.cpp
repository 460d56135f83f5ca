#include "csafl/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "csafl/dataset.hpp"
#include "csafl/errors.hpp"
#include "csafl/io.hpp"
#include "csafl/latency.hpp"
#include "csafl/metrics.hpp"
#include "csafl/text.hpp"

#ifndef CSAFL_VERSION
#define CSAFL_VERSION "unknown"
#endif

namespace csafl {

using nlohmann::json;
namespace fs = std::filesystem;

std::string code_version() { return CSAFL_VERSION; }

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name(key) + ": wrong type");
        }
    }

    template <typename T>
    T require(const char* key) {
        if (!obj_.contains(key)) throw ConfigError(name(key) + ": missing");
        T out{};
        read(key, out);
        return out;
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& at(const char* key) {
        seen_.insert(key);
        return obj_.at(key);
    }
    std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) throw ConfigError(name(key) + ": unknown key");
        }
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(ObjectReader& r, const char* key, Enum& out, Parse parse) {
    std::string text;
    r.read(key, text);
    if (text.empty()) return;
    try {
        out = parse(text);
    } catch (const ConfigError& e) {
        throw ConfigError(r.name(key) + ": " + e.what());
    }
}

LatencyMode parse_latency_mode(std::string_view s) {
    if (s == "expected") return LatencyMode::expected;
    if (s == "sampled") return LatencyMode::sampled;
    throw ConfigError("expected 'expected' or 'sampled', got '" + std::string(s) + "'");
}
std::string latency_mode_name(LatencyMode m) { return m == LatencyMode::expected ? "expected" : "sampled"; }

Normalization parse_normalization(std::string_view s) {
    if (s == "variance") return Normalization::variance;
    if (s == "stddev") return Normalization::stddev;
    throw ConfigError("expected 'variance' or 'stddev', got '" + std::string(s) + "'");
}
std::string normalization_name(Normalization n) { return n == Normalization::variance ? "variance" : "stddev"; }

AffinityExponent parse_affinity_exponent(std::string_view s) {
    if (s == "norm") return AffinityExponent::norm;
    if (s == "norm_squared") return AffinityExponent::norm_squared;
    throw ConfigError("expected 'norm' or 'norm_squared', got '" + std::string(s) + "'");
}
std::string affinity_exponent_name(AffinityExponent a) { return a == AffinityExponent::norm ? "norm" : "norm_squared"; }

CommitMode::Kind parse_commit_kind(std::string_view s) {
    if (s == "replace") return CommitMode::Kind::replace;
    if (s == "mix") return CommitMode::Kind::mix;
    throw ConfigError("expected 'replace' or 'mix', got '" + std::string(s) + "'");
}

void read_training(ObjectReader& parent, const char* key, TrainingConfig& t) {
    if (!parent.has(key)) {
        parent.read(key, t.learning_rate);  // marks the key as known
        return;
    }
    ObjectReader r(parent.at(key), parent.name(key));
    r.read("learning_rate", t.learning_rate);
    r.read("batch_size", t.batch_size);
    r.read("local_epochs", t.local_epochs);
    r.finish();
}

json training_to_json(const TrainingConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"local_epochs", t.local_epochs}};
}

void read_cluster(ObjectReader& parent, ClusterConfig& c) {
    if (!parent.has("cluster")) return;
    ObjectReader r(parent.at("cluster"), parent.name("cluster"));
    r.read("beta", c.beta);
    r.read("sigma", c.sigma);
    r.read("n_groups", c.n_groups);
    r.read("seed", c.seed);
    read_training(r, "pretrain", c.pretrain);
    read_enum(r, "affinity_exponent", c.affinity_exponent, parse_affinity_exponent);
    read_enum(r, "normalization", c.normalization, parse_normalization);
    read_enum(r, "latency_mode", c.latency_mode, parse_latency_mode);
    r.read("kmeans_restarts", c.kmeans_restarts);
    r.read("kmeans_max_iterations", c.kmeans_max_iterations);
    r.finish();
}

json cluster_to_json(const ClusterConfig& c) {
    return {
        {"beta", c.beta},
        {"sigma", c.sigma},
        {"n_groups", c.n_groups},
        {"seed", c.seed},
        {"pretrain", training_to_json(c.pretrain)},
        {"affinity_exponent", affinity_exponent_name(c.affinity_exponent)},
        {"normalization", normalization_name(c.normalization)},
        {"latency_mode", latency_mode_name(c.latency_mode)},
        {"kmeans_restarts", c.kmeans_restarts},
        {"kmeans_max_iterations", c.kmeans_max_iterations},
    };
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << body;
}

template <typename Fn>
void write_with(const fs::path& path, Fn fn) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    fn(out);
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
    RunConfig cfg;
    ObjectReader r(doc, "");
    cfg.dataset = resolve(base_dir, r.require<std::string>("dataset"));
    cfg.profiles = resolve(base_dir, r.require<std::string>("profiles"));
    if (r.has("assignment")) cfg.assignment = resolve(base_dir, r.require<std::string>("assignment"));
    cfg.output_dir = resolve(base_dir, r.require<std::string>("output_dir"));

    auto& p = cfg.protocol;
    read_enum(r, "protocol", p.protocol, parse_protocol);
    r.read("rounds", p.rounds);
    r.read("budget_ms", p.budget_ms);
    r.read("delay_threshold", p.delay_threshold);
    r.read("clients_per_round", p.clients_per_round);
    read_training(r, "training", p.training);
    r.read("seed", p.seed);
    read_enum(r, "commit_mode", p.commit_mode.kind, parse_commit_kind);
    r.read("mix_alpha", p.commit_mode.alpha);
    r.read("pull_on_commit", p.pull_on_commit);
    read_enum(r, "latency_mode", p.latency_mode, parse_latency_mode);
    r.read("redraw_latency_per_update", p.redraw_latency_per_update);
    read_enum(r, "random_grouping_rule", p.random_grouping_rule, parse_update_rule);
    read_cluster(r, cfg.cluster);

    r.read("label", cfg.label);
    if (cfg.label.empty()) {
        cfg.label = cfg.dataset.stem().string() + "-" + text::format_g9(p.budget_ms);
    }
    r.finish();

    try {
        p.validate();
        cfg.cluster.validate();
    } catch (const std::logic_error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    const auto& p = cfg.protocol;
    json doc = {
        {"dataset", cfg.dataset.string()},
        {"profiles", cfg.profiles.string()},
        {"output_dir", cfg.output_dir.string()},
        {"label", cfg.label},
        {"protocol", std::string(protocol_name(p.protocol))},
        {"rounds", p.rounds},
        {"budget_ms", p.budget_ms},
        {"delay_threshold", p.delay_threshold},
        {"clients_per_round", p.clients_per_round},
        {"training", training_to_json(p.training)},
        {"seed", p.seed},
        {"commit_mode", p.commit_mode.kind == CommitMode::Kind::replace ? "replace" : "mix"},
        {"mix_alpha", p.commit_mode.alpha},
        {"pull_on_commit", p.pull_on_commit},
        {"latency_mode", latency_mode_name(p.latency_mode)},
        {"redraw_latency_per_update", p.redraw_latency_per_update},
        {"random_grouping_rule", std::string(update_rule_name(p.random_grouping_rule))},
        {"cluster", cluster_to_json(cfg.cluster)},
    };
    if (cfg.assignment) doc["assignment"] = cfg.assignment->string();
    return doc;
}

SimulationTrace execute_run(const RunConfig& cfg) {
    const FederatedDataset ds = load_dataset(cfg.dataset);
    const ProfileSet profiles = load_profiles(cfg.profiles);
    if (profiles.clients.size() != ds.shards.size()) {
        throw ConfigError("profiles: " + cfg.profiles.string() + " has " + std::to_string(profiles.clients.size()) +
                          " clients but dataset has " + std::to_string(ds.shards.size()));
    }

    const auto n = static_cast<int>(ds.shards.size());
    std::string assignment_source;
    GroupAssignment assignment;
    if (cfg.assignment) {
        assignment = load_assignment(*cfg.assignment);
        assignment_source = "file";
    } else if (uses_clustered_groups(cfg.protocol.protocol)) {
        assignment = cluster_clients(ds, profiles.clients, profiles.radio, cfg.cluster).assignment;
        assignment_source = "clustered";
    } else if (cfg.protocol.protocol == Protocol::r_fedavg) {
        // Only the group count matters; the groups themselves are redrawn.
        assignment = random_groups(n, cfg.cluster.n_groups, cfg.protocol.seed);
        assignment_source = "group_count";
    } else {
        assignment = single_group(n);
        assignment_source = "single";
    }

    SimulationTrace trace = run_experiment(ds, assignment, profiles.clients, profiles.radio, cfg.protocol);

    fs::create_directories(cfg.output_dir);
    write_with(cfg.output_dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, trace); });
    write_with(cfg.output_dir / "events.csv", [&](std::ostream& o) { write_events_csv(o, trace); });
    write_with(cfg.output_dir / "rounds.csv", [&](std::ostream& o) { write_rounds_csv(o, trace); });
    write_with(cfg.output_dir / "idle.csv", [&](std::ostream& o) { write_idle_csv(o, trace); });
    save_assignment(trace.assignment, cfg.output_dir / "assignment.csv");

    std::vector<int> sizes(static_cast<std::size_t>(trace.assignment.n_groups), 0);
    for (int g : trace.assignment.group_of) ++sizes[static_cast<std::size_t>(g)];
    json meta = {
        {"code_version", code_version()},
        {"config", run_config_to_json(cfg)},
        {"seeds", {{"run", cfg.protocol.seed}, {"cluster", cfg.cluster.seed}}},
        {"update_rule", std::string(update_rule_name(update_rule_for(cfg.protocol)))},
        {"assignment_source", assignment_source},
        {"group_sizes", sizes},
        {"radio", profiles_to_json(profiles)["radio"]},
        {"dataset_shape",
         {{"clients", ds.shards.size()}, {"classes", ds.num_classes}, {"features", ds.feature_dim}}},
    };
    write_text(cfg.output_dir / "run-metadata.json", meta.dump(2) + "\n");
    return trace;
}

namespace {

std::vector<Sample> load_pool(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open pool file " + path.string());
    std::vector<Sample> pool;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = text::split(trimmed, ',');
        const auto label = text::parse_int(fields[0]);
        if (!label) {
            if (line_no == 1) continue;  // header
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad label");
        }
        Sample s;
        s.label = static_cast<int>(*label);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const auto v = text::parse_double(fields[i]);
            if (!v) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad feature " + std::to_string(i));
            s.features.push_back(*v);
        }
        pool.push_back(std::move(s));
    }
    if (pool.empty()) throw ParseError(path.string() + ": no samples");
    return pool;
}

struct RunOutput {
    fs::path dir;
    std::string label;
    std::string protocol;
    double budget_ms = 0.0;
    std::vector<std::pair<int, double>> accuracy;  // (round, weighted accuracy)
    std::vector<double> idle_ms;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::string_view expected_header) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != expected_header) {
        throw ParseError(path.string() + ":1: expected header '" + std::string(expected_header) + "'");
    }
    std::vector<std::vector<std::string>> rows;
    const auto width = text::split(expected_header, ',').size();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = text::split(trimmed, ',');
        if (fields.size() != width) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                             " fields");
        }
        rows.emplace_back(fields.begin(), fields.end());
    }
    return rows;
}

double number_at(const fs::path& path, std::size_t row, const std::string& field) {
    const auto v = text::parse_double(field);
    if (!v) throw ParseError(path.string() + ": row " + std::to_string(row + 1) + ": bad number '" + field + "'");
    return *v;
}

RunOutput load_run_output(const fs::path& dir) {
    RunOutput run;
    run.dir = dir;
    const auto meta_path = dir / "run-metadata.json";
    const json meta = read_json_file(meta_path);
    try {
        const auto& c = meta.at("config");
        run.label = c.at("label").get<std::string>();
        run.protocol = c.at("protocol").get<std::string>();
        run.budget_ms = c.at("budget_ms").get<double>();
    } catch (const json::exception&) {
        throw ParseError(meta_path.string() + ": config.label, config.protocol or config.budget_ms missing");
    }

    const auto rounds_path = dir / "rounds.csv";
    const auto rows = read_csv(rounds_path, "round,protocol,weighted_accuracy,mean_loss");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        run.accuracy.emplace_back(static_cast<int>(number_at(rounds_path, i, rows[i][0])),
                                  number_at(rounds_path, i, rows[i][2]));
    }
    const auto idle_path = dir / "idle.csv";
    const auto idle_rows = read_csv(idle_path, "round,group_id,client_id,idle_ms");
    for (std::size_t i = 0; i < idle_rows.size(); ++i) {
        run.idle_ms.push_back(number_at(idle_path, i, idle_rows[i][3]));
    }
    if (run.accuracy.empty()) throw ParseError(rounds_path.string() + ": no rounds");
    return run;
}

double final_window_mean(const RunOutput& run, int window) {
    const auto n = std::min<std::size_t>(run.accuracy.size(), static_cast<std::size_t>(window));
    double sum = 0.0;
    for (std::size_t i = run.accuracy.size() - n; i < run.accuracy.size(); ++i) sum += run.accuracy[i].second;
    return sum / static_cast<double>(n);
}

int protocol_rank(const std::string& name) {
    try {
        const auto p = parse_protocol(name);
        const auto all = all_protocols();
        return static_cast<int>(std::find(all.begin(), all.end(), p) - all.begin());
    } catch (const ConfigError&) {
        return 1000;
    }
}

void run_report(const std::vector<std::string>& dirs, const fs::path& out_dir, double threshold, int window,
                int buckets) {
    std::vector<RunOutput> runs;
    for (const auto& d : dirs) runs.push_back(load_run_output(d));
    std::stable_sort(runs.begin(), runs.end(), [](const RunOutput& a, const RunOutput& b) {
        return std::make_pair(a.label, protocol_rank(a.protocol)) < std::make_pair(b.label, protocol_rank(b.protocol));
    });
    fs::create_directories(out_dir);

    std::vector<std::string> labels;
    std::vector<std::string> protocols;
    std::map<std::pair<std::string, std::string>, double> cell;

    std::ostringstream comparison;
    comparison << "label,protocol,final_window_accuracy,best_accuracy,exceed_fraction,rounds\n";
    std::ostringstream curves;
    curves << "round,label,protocol,weighted_accuracy\n";
    std::ostringstream hist;
    hist << "label,protocol,bucket_lo_ms,bucket_hi_ms,frequency\n";

    for (const auto& run : runs) {
        if (std::find(labels.begin(), labels.end(), run.label) == labels.end()) labels.push_back(run.label);
        if (std::find(protocols.begin(), protocols.end(), run.protocol) == protocols.end()) {
            protocols.push_back(run.protocol);
        }
        const double final_acc = final_window_mean(run, window);
        double best = 0.0;
        for (const auto& [round, acc] : run.accuracy) {
            best = std::max(best, acc);
            curves << round << ',' << run.label << ',' << run.protocol << ',' << text::format_g9(acc) << '\n';
        }
        const auto h = idle_histogram(std::span<const double>(run.idle_ms), run.budget_ms, threshold,
                                      default_idle_edges(run.budget_ms, buckets));
        for (std::size_t b = 0; b < h.edges.size(); ++b) {
            hist << run.label << ',' << run.protocol << ',' << text::format_g9(h.edges[b]) << ','
                 << (b + 1 < h.edges.size() ? text::format_g9(h.edges[b + 1]) : std::string("inf")) << ','
                 << text::format_g9(h.frequency[b]) << '\n';
        }
        comparison << run.label << ',' << run.protocol << ',' << text::format_g9(final_acc) << ','
                   << text::format_g9(best) << ',' << text::format_g9(h.exceed_fraction) << ','
                   << run.accuracy.size() << '\n';
        cell[{run.protocol, run.label}] = final_acc;
    }
    std::stable_sort(protocols.begin(), protocols.end(),
                     [](const auto& a, const auto& b) { return protocol_rank(a) < protocol_rank(b); });

    // Rows: protocols; columns: dataset-budget labels; cells: accuracy in percent.
    std::ostringstream table;
    table << "protocol";
    for (const auto& l : labels) table << ',' << l;
    table << '\n';
    for (const auto& p : protocols) {
        table << p;
        for (const auto& l : labels) {
            const auto it = cell.find({p, l});
            table << ',' << (it == cell.end() ? std::string() : text::format_g9(100.0 * it->second));
        }
        table << '\n';
    }

    write_text(out_dir / "comparison.csv", comparison.str());
    write_text(out_dir / "table.csv", table.str());
    write_text(out_dir / "accuracy_vs_round.csv", curves.str());
    write_text(out_dir / "idle_histogram.csv", hist.str());
    std::cout << table.str();
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Clustered semi-asynchronous federated learning simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "Write a federated dataset file");
    fs::path data_out;
    fs::path pool_path;
    SyntheticConfig syn;
    int classes_per_client = 2;
    gen_data->add_option("--out", data_out, "Output dataset file")->required();
    gen_data->add_option("--seed", syn.seed);
    gen_data->add_option("--alpha", syn.alpha)->capture_default_str();
    gen_data->add_option("--beta", syn.beta)->capture_default_str();
    gen_data->add_option("--clients", syn.num_clients)->capture_default_str();
    gen_data->add_option("--features", syn.feature_dim)->capture_default_str();
    gen_data->add_option("--classes", syn.num_classes)->capture_default_str();
    gen_data->add_option("--min-samples", syn.sizes.min_samples)->capture_default_str();
    gen_data->add_option("--exponent", syn.sizes.exponent)->capture_default_str();
    gen_data->add_option("--target-total", syn.sizes.target_total)->capture_default_str();
    gen_data->add_option("--test-fraction", syn.test_fraction)->capture_default_str();
    gen_data->add_option("--pool", pool_path, "Partition a 'label,f1,...' CSV instead of generating");
    gen_data->add_option("--classes-per-client", classes_per_client, "With --pool")->capture_default_str();

    // gen-profiles
    auto* gen_profiles = app.add_subcommand("gen-profiles", "Write client latency profiles");
    fs::path prof_dataset;
    fs::path prof_out;
    std::uint64_t prof_seed = 0;
    ProfileRanges ranges;
    RadioSystem radio;
    double model_bits = 0.0;
    std::string noise_bw = "allocated";
    gen_profiles->add_option("--dataset", prof_dataset)->required();
    gen_profiles->add_option("--out", prof_out)->required();
    gen_profiles->add_option("--seed", prof_seed);
    gen_profiles->add_option("--compute-ms-min", ranges.compute_ms_min)->capture_default_str();
    gen_profiles->add_option("--compute-ms-max", ranges.compute_ms_max)->capture_default_str();
    gen_profiles->add_option("--shift-fraction-min", ranges.shift_fraction_min)->capture_default_str();
    gen_profiles->add_option("--shift-fraction-max", ranges.shift_fraction_max)->capture_default_str();
    gen_profiles->add_option("--power-min", ranges.power_min)->capture_default_str();
    gen_profiles->add_option("--power-max", ranges.power_max)->capture_default_str();
    gen_profiles->add_option("--share-min", ranges.share_min)->capture_default_str();
    gen_profiles->add_option("--share-max", ranges.share_max)->capture_default_str();
    gen_profiles->add_option("--distance-min", ranges.distance_min)->capture_default_str();
    gen_profiles->add_option("--distance-max", ranges.distance_max)->capture_default_str();
    gen_profiles->add_option("--bandwidth-hz", radio.total_bandwidth_hz)->capture_default_str();
    gen_profiles->add_option("--noise-dbm-per-hz", radio.noise_dbm_per_hz)->capture_default_str();
    gen_profiles->add_option("--model-size-bits", model_bits, "Default: 32 bits per model parameter");
    gen_profiles->add_option("--noise-bandwidth", noise_bw)->check(CLI::IsMember({"allocated", "total"}));

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Group clients by spectral clustering");
    fs::path cl_dataset;
    fs::path cl_profiles;
    fs::path cl_out;
    fs::path cl_report;
    fs::path cl_affinity;
    ClusterConfig ccfg;
    std::string cl_exponent = "norm";
    std::string cl_norm = "variance";
    cluster->add_option("--dataset", cl_dataset)->required();
    cluster->add_option("--profiles", cl_profiles)->required();
    cluster->add_option("--out", cl_out, "Assignment file")->required();
    cluster->add_option("--report", cl_report, "Cluster report JSON");
    cluster->add_option("--dump-affinity", cl_affinity, "Dense affinity matrix CSV");
    cluster->add_option("--groups", ccfg.n_groups)->capture_default_str();
    cluster->add_option("--beta", ccfg.beta)->capture_default_str();
    cluster->add_option("--sigma", ccfg.sigma)->capture_default_str();
    cluster->add_option("--seed", ccfg.seed);
    cluster->add_option("--lr", ccfg.pretrain.learning_rate)->capture_default_str();
    cluster->add_option("--epochs", ccfg.pretrain.local_epochs)->capture_default_str();
    cluster->add_option("--batch", ccfg.pretrain.batch_size)->capture_default_str();
    cluster->add_option("--affinity-exponent", cl_exponent)->check(CLI::IsMember({"norm", "norm_squared"}));
    cluster->add_option("--normalization", cl_norm)->check(CLI::IsMember({"variance", "stddev"}));

    // run
    auto* run = app.add_subcommand("run", "Simulate one protocol from a JSON config");
    fs::path run_config_path;
    std::string run_protocol;
    fs::path run_out;
    run->add_option("--config", run_config_path)->required();
    run->add_option("--protocol", run_protocol, "Override the config's protocol");
    run->add_option("--out", run_out, "Override the config's output_dir");

    // report
    auto* report = app.add_subcommand("report", "Aggregate run directories into tables and plot data");
    std::vector<std::string> report_runs;
    fs::path report_out;
    double threshold = 0.6;
    int window = 10;
    int buckets = 15;
    report->add_option("runs", report_runs, "Run output directories")->required();
    report->add_option("--out", report_out)->required();
    report->add_option("--threshold", threshold)->capture_default_str();
    report->add_option("--final-window", window)->capture_default_str();
    report->add_option("--buckets", buckets)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen_data) {
            FederatedDataset ds;
            if (!pool_path.empty()) {
                const auto pool = load_pool(pool_path);
                auto part = partition_by_power_law(pool, syn.num_clients, classes_per_client, syn.test_fraction,
                                                   syn.seed, syn.sizes.exponent);
                if (part.dropped > 0) std::cerr << "dropped " << part.dropped << " pool samples\n";
                ds = std::move(part.dataset);
            } else {
                ds = generate_synthetic(syn);
            }
            save_dataset(ds, data_out);
            std::cout << "wrote " << ds.num_clients() << " clients, " << ds.total_samples() << " samples to "
                      << data_out.string() << '\n';
        } else if (*gen_profiles) {
            const auto ds = load_dataset(prof_dataset);
            ranges.validate();
            ProfileSet set;
            set.radio = radio;
            set.radio.noise_bandwidth = noise_bw == "total" ? NoiseBandwidth::total : NoiseBandwidth::allocated;
            set.radio.model_size_bits =
                model_bits > 0.0 ? model_bits : 32.0 * (ds.num_classes * ds.feature_dim + ds.num_classes);
            set.radio.validate();
            set.clients = generate_profiles(ds, ranges, prof_seed);
            save_profiles(set, prof_out);
            std::cout << "wrote " << set.clients.size() << " profiles to " << prof_out.string() << '\n';
        } else if (*cluster) {
            const auto ds = load_dataset(cl_dataset);
            const auto profiles = load_profiles(cl_profiles);
            if (profiles.clients.size() != ds.shards.size()) {
                throw ConfigError("profiles: " + cl_profiles.string() + " does not match the dataset's client count");
            }
            ccfg.affinity_exponent = parse_affinity_exponent(cl_exponent);
            ccfg.normalization = parse_normalization(cl_norm);
            ccfg.validate();
            const auto rep = cluster_clients(ds, profiles.clients, profiles.radio, ccfg);
            save_assignment(rep.assignment, cl_out);
            if (!cl_affinity.empty()) save_matrix(rep.affinity.entries, cl_affinity);
            if (!cl_report.empty()) {
                std::vector<int> sizes(static_cast<std::size_t>(rep.assignment.n_groups), 0);
                for (int g : rep.assignment.group_of) ++sizes[static_cast<std::size_t>(g)];
                const json doc = {
                    {"code_version", code_version()},
                    {"config", cluster_to_json(ccfg)},
                    {"n_groups", rep.assignment.n_groups},
                    {"group_sizes", sizes},
                    {"group_of", rep.assignment.group_of},
                    {"latencies_ms", rep.latencies_ms},
                    {"latency_degenerate", rep.similarity.latency_degenerate},
                };
                write_text(cl_report, doc.dump(2) + "\n");
            }
            std::cout << "wrote " << rep.assignment.n_groups << " groups to " << cl_out.string() << '\n';
        } else if (*run) {
            const auto base = run_config_path.has_parent_path() ? run_config_path.parent_path() : fs::path(".");
            json doc = read_json_file(run_config_path);
            if (!run_protocol.empty() && doc.is_object()) doc["protocol"] = run_protocol;
            if (!run_out.empty() && doc.is_object()) doc["output_dir"] = fs::absolute(run_out).string();
            const auto cfg = parse_run_config(doc, base);
            const auto trace = execute_run(cfg);
            std::cout << protocol_name(cfg.protocol.protocol) << ": final weighted accuracy "
                      << text::format_g9(trace.rounds.back().weighted_accuracy) << " -> " << cfg.output_dir.string()
                      << '\n';
        } else if (*report) {
            run_report(report_runs, report_out, threshold, window, buckets);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<std::string> copy = args;
    std::vector<char*> argv;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    return cli_main(static_cast<int>(copy.size()), argv.data());
}

}  // namespace csafl
