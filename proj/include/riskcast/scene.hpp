#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "riskcast/geometry.hpp"

namespace riskcast {

struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Vec2 position() const { return {x, y}; }
  Vec2 velocity() const { return {vx, vy}; }
  double speed() const { return std::hypot(vx, vy); }
  friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

struct AgentHistory {
  std::string id;
  AgentClass agent_class = AgentClass::car;
  double length = 4.5;
  double width = 1.8;
  double mass = 1500.0;
  std::vector<KinematicState> states;  // past, oldest first; back() is t = 0
  std::vector<KinematicState> future;  // t = 1..T, empty when unknown

  AgentState at(const KinematicState& s) const;
  AgentState current() const { return at(states.back()); }
  friend bool operator==(const AgentHistory&, const AgentHistory&) = default;
};

enum class MapKind { lane_center, road_boundary, crosswalk };

std::string_view to_string(MapKind k);
MapKind map_kind_from_string(std::string_view s);

struct MapPolyline {
  std::vector<Vec2> waypoints;
  MapKind kind = MapKind::lane_center;
  friend bool operator==(const MapPolyline&, const MapPolyline&) = default;
};

inline constexpr std::size_t kMaxWaypoints = 20;

/// Splits polylines longer than kMaxWaypoints into chunks that share their
/// boundary waypoint.
std::vector<MapPolyline> split_polyline(const MapPolyline& line);

enum class ScenarioTemplate { straight, left_turn, right_turn, merge, crossing_conflict };

std::string_view to_string(ScenarioTemplate t);
ScenarioTemplate template_from_string(std::string_view s);

struct Scenario {
  std::string id;
  double dt = 0.1;
  std::size_t history_steps = 10;  // H; each history holds H + 1 states
  std::size_t future_steps = 50;   // T
  std::size_t ego_index = 0;
  std::vector<AgentHistory> agents;
  std::vector<MapPolyline> map;
  std::optional<ScenarioTemplate> source_template;

  const AgentHistory& ego() const { return agents.at(ego_index); }
  bool has_futures() const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Throws ValidationError naming the offending agent or JSON path.
void validate(const Scenario& scn);

/// Parses and validates a scenario document. Schema:
///   { "id"?: str, "template"?: str, "dt": num, "H": int, "T": int,
///     "ego_index": int,
///     "agents": [ { "id": str, "class": "car"|"truck"|"pedestrian"|"cyclist",
///                   "length": num, "width": num, "mass": num,
///                   "states": [state x (H+1)], "future": [state x T] (optional) } ],
///     "map": [ { "kind": "lane_center"|"road_boundary"|"crosswalk",
///                "waypoints": [[x, y], ...] } ] }
///   state = { "x", "y", "yaw", "vx", "vy" }
Scenario load_scenario(std::string_view text);
Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& scn);
std::string dump_scenario(const Scenario& scn);
Scenario read_scenario_file(const std::string& path);

/// Re-expresses the scene in `agent_id`'s pose at t = 0 and drops agents and
/// polylines with no point within `radius` of it. The target becomes the ego
/// if the original ego is dropped.
Scenario local_frame(const Scenario& scn, std::string_view agent_id,
                     double radius = std::numeric_limits<double>::infinity());

struct GeneratorConfig {
  std::size_t history_steps = 10;
  std::size_t future_steps = 50;
  double dt = 0.1;
  double accel_noise = 0.3;      // m/s^2 per-step process noise
  double yaw_rate_noise = 0.02;  // rad/s per-step process noise
};

/// Seeded synthetic scenario. Agent 0 is the ego and performs the template
/// manoeuvre; positions always integrate velocities exactly.
Scenario generate_scenario(ScenarioTemplate tpl, std::size_t n_agents, std::uint64_t seed,
                           const GeneratorConfig& cfg = {});

}  // namespace riskcast
