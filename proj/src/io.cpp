#include "csafl/io.hpp"

#include <fstream>
#include <ostream>

#include "csafl/errors.hpp"
#include "csafl/text.hpp"

namespace csafl {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw ConfigError(where + "." + key + ": missing");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T>
T optional(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return required<T>(obj, key, where);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    return out;
}

}  // namespace

json profiles_to_json(const ProfileSet& set) {
    json radio = {
        {"total_bandwidth_hz", set.radio.total_bandwidth_hz},
        {"noise_dbm_per_hz", set.radio.noise_dbm_per_hz},
        {"model_size_bits", set.radio.model_size_bits},
        {"noise_bandwidth", set.radio.noise_bandwidth == NoiseBandwidth::allocated ? "allocated" : "total"},
    };
    json clients = json::array();
    for (const auto& p : set.clients) {
        clients.push_back({
            {"client_id", p.client_id},
            {"data_size", p.data_size},
            {"x_ms_per_sample", p.x_ms_per_sample},
            {"mu", p.mu},
            {"power_dbm", p.power_dbm},
            {"bandwidth_share", p.bandwidth_share},
            {"distance_km", p.distance_km},
        });
    }
    return {{"radio", radio}, {"clients", clients}};
}

ProfileSet profiles_from_json(const json& doc, const std::string& source) {
    ProfileSet set;
    if (!doc.is_object() || !doc.contains("radio")) throw ConfigError(source + ": radio: missing");
    const json& radio = doc.at("radio");
    const std::string rw = source + ": radio";
    set.radio.total_bandwidth_hz = required<double>(radio, "total_bandwidth_hz", rw);
    set.radio.noise_dbm_per_hz = required<double>(radio, "noise_dbm_per_hz", rw);
    set.radio.model_size_bits = required<double>(radio, "model_size_bits", rw);
    const auto noise_bw = optional<std::string>(radio, "noise_bandwidth", "allocated", rw);
    if (noise_bw == "allocated") {
        set.radio.noise_bandwidth = NoiseBandwidth::allocated;
    } else if (noise_bw == "total") {
        set.radio.noise_bandwidth = NoiseBandwidth::total;
    } else {
        throw ConfigError(rw + ".noise_bandwidth: expected 'allocated' or 'total'");
    }
    try {
        set.radio.validate();
    } catch (const ContractError& e) {
        throw ConfigError(source + ": " + e.what());
    }

    if (!doc.contains("clients") || !doc.at("clients").is_array()) {
        throw ConfigError(source + ": clients: missing or not an array");
    }
    std::size_t i = 0;
    for (const auto& c : doc.at("clients")) {
        const std::string where = source + ": clients[" + std::to_string(i++) + "]";
        ClientProfile p;
        p.client_id = required<int>(c, "client_id", where);
        p.data_size = required<std::int64_t>(c, "data_size", where);
        p.x_ms_per_sample = required<double>(c, "x_ms_per_sample", where);
        p.mu = required<double>(c, "mu", where);
        p.power_dbm = required<double>(c, "power_dbm", where);
        p.bandwidth_share = required<double>(c, "bandwidth_share", where);
        p.distance_km = required<double>(c, "distance_km", where);
        try {
            p.validate();
        } catch (const ContractError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        set.clients.push_back(p);
    }
    return set;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_profiles(const ProfileSet& set, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << profiles_to_json(set).dump(2) << '\n';
}

ProfileSet load_profiles(const std::filesystem::path& path) {
    return profiles_from_json(read_json_file(path), path.string());
}

void save_assignment(const GroupAssignment& a, const std::filesystem::path& path) {
    a.validate();
    auto out = open_out(path);
    out << "client_id,group_id\n";
    for (std::size_t c = 0; c < a.group_of.size(); ++c) {
        out << c << ',' << a.group_of[c] << '\n';
    }
}

GroupAssignment load_assignment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open assignment file " + path.string());
    GroupAssignment a;
    std::string line;
    std::size_t line_no = 0;
    int max_group = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || (line_no == 1 && trimmed.rfind("client_id", 0) == 0)) continue;
        const auto fields = text::split(trimmed, ',');
        const auto client = fields.size() == 2 ? text::parse_int(fields[0]) : std::nullopt;
        const auto group = fields.size() == 2 ? text::parse_int(fields[1]) : std::nullopt;
        if (!client || !group || *group < 0) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected '<client_id>,<group_id>'");
        }
        if (*client != static_cast<long long>(a.group_of.size())) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": client ids must be listed in order from 0");
        }
        a.group_of.push_back(static_cast<int>(*group));
        max_group = std::max(max_group, static_cast<int>(*group));
    }
    a.n_groups = max_group + 1;
    try {
        a.validate();
    } catch (const ConfigError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return a;
}

void save_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c > 0) out << ',';
            out << text::format_g9(m(r, c));
        }
        out << '\n';
    }
}

void write_metrics_csv(std::ostream& out, const SimulationTrace& trace) {
    const auto protocol = protocol_name(trace.protocol);
    out << "round,protocol,group_id,weighted_accuracy,mean_loss,commits,forced_syncs\n";
    for (const auto& m : trace.metrics) {
        out << m.round << ',' << protocol << ',' << m.group_id << ',' << text::format_g9(m.accuracy) << ','
            << text::format_g9(m.mean_loss) << ',' << m.commits << ',' << m.forced_syncs << '\n';
    }
}

void write_events_csv(std::ostream& out, const SimulationTrace& trace) {
    out << "time_ms,round,group_id,client_id,kind,group_version\n";
    for (const auto& e : trace.events) {
        out << text::format_g9(e.time_ms) << ',' << e.round << ',' << e.group_id << ',' << e.client_id << ','
            << event_kind_name(e.kind) << ',' << e.group_version << '\n';
    }
}

void write_rounds_csv(std::ostream& out, const SimulationTrace& trace) {
    const auto protocol = protocol_name(trace.protocol);
    out << "round,protocol,weighted_accuracy,mean_loss\n";
    for (const auto& r : trace.rounds) {
        out << r.round << ',' << protocol << ',' << text::format_g9(r.weighted_accuracy) << ','
            << text::format_g9(r.mean_loss) << '\n';
    }
}

void write_idle_csv(std::ostream& out, const SimulationTrace& trace) {
    out << "round,group_id,client_id,idle_ms\n";
    for (const auto& r : trace.idle) {
        out << r.round << ',' << r.group_id << ',' << r.client_id << ',' << text::format_g9(r.idle_ms) << '\n';
    }
}

}  // namespace csafl
