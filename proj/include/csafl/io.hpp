#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "csafl/cluster.hpp"
#include "csafl/latency.hpp"
#include "csafl/linalg.hpp"
#include "csafl/sim.hpp"

namespace csafl {

struct ProfileSet {
    RadioSystem radio;
    std::vector<ClientProfile> clients;
};

nlohmann::json profiles_to_json(const ProfileSet& set);
// `source` prefixes error messages, which also name the offending key.
ProfileSet profiles_from_json(const nlohmann::json& doc, const std::string& source);

void save_profiles(const ProfileSet& set, const std::filesystem::path& path);
ProfileSet load_profiles(const std::filesystem::path& path);

// "client_id,group_id" header followed by one row per client.
void save_assignment(const GroupAssignment& a, const std::filesystem::path& path);
GroupAssignment load_assignment(const std::filesystem::path& path);

void save_matrix(const DenseMatrix& m, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

// CSV emitters. Every number is written with %.9g.
void write_metrics_csv(std::ostream& out, const SimulationTrace& trace);
void write_events_csv(std::ostream& out, const SimulationTrace& trace);
void write_rounds_csv(std::ostream& out, const SimulationTrace& trace);
void write_idle_csv(std::ostream& out, const SimulationTrace& trace);

}  // namespace csafl
