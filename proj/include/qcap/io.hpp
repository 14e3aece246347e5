#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qcap/analysis.hpp"
#include "qcap/planner.hpp"
#include "qcap/polytope.hpp"
#include "qcap/sim.hpp"

namespace qcap::io {

using json = nlohmann::json;

inline constexpr const char* kConfigSchema = "qcap.config/1";
inline constexpr const char* kArchiveSchema = "qcap.tube_archive/1";
inline constexpr const char* kPlanSchema = "qcap.plan/1";
inline constexpr const char* kSweepSchema = "qcap.sweep/1";
inline constexpr const char* kTrajectorySchema = "qcap.trajectory/1";
inline constexpr const char* kPolygonSchema = "qcap.slice_polygons/1";

/// Invalid or inconsistent configuration or archive content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimSettings {
  double horizon_s = 3.0;
  sim::Grid grid;
  int timing = 1;
  int jobs = 1;
};

/// Everything a command needs; every field has a default.
struct RunConfig {
  AnalysisConfig analysis;
  plan::PlanConfig planner;
  SimSettings sim;
};

/// Unknown keys and out-of-range values throw ConfigError.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

json polytope_to_json(const Polytope& P);
Polytope polytope_from_json(const json& j);

/// Tube archive: resolved config, balance tube, capturable tubes per terminal phase, surrogates.
json archive_to_json(const Analysis& a, const RunConfig& c);
/// Returns the analysis and the config stored with it.
std::pair<Analysis, RunConfig> archive_from_json(const json& j);
std::pair<Analysis, RunConfig> load_archive(const std::filesystem::path& path);

json plan_to_json(const plan::PlanResult& p, const Analysis& a, const RunConfig& c);

/// "dv_x,dv_y,success,reason" rows after a '#' header line carrying schema and config.
std::string sweep_csv(const sim::SweepResult& r, const RunConfig& c);
json sweep_summary(const sim::SweepResult& r, const RunConfig& c);
std::string trajectory_csv(const sim::RolloutResult& r, const Analysis& a, const RunConfig& c);

/// Support points of each slice projected on coordinates (i, j), at `directions` evenly spaced angles.
std::string slice_polygons_csv(const std::vector<Polytope>& slices, int i, int j, const RunConfig& c,
                               int directions = 64);

/// Writes through a temporary file in the same directory and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace qcap::io
