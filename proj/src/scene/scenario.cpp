#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "riskcast/core/error.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {

using nlohmann::json;

AgentState AgentHistory::at(const KinematicState& s) const {
  AgentState a;
  a.position = s.position();
  a.yaw = s.yaw;
  a.velocity = s.velocity();
  a.length = length;
  a.width = width;
  a.mass = mass;
  a.agent_class = agent_class;
  return a;
}

std::string_view to_string(MapKind k) {
  switch (k) {
    case MapKind::lane_center: return "lane_center";
    case MapKind::road_boundary: return "road_boundary";
    case MapKind::crosswalk: return "crosswalk";
  }
  return "lane_center";
}

MapKind map_kind_from_string(std::string_view s) {
  if (s == "lane_center") return MapKind::lane_center;
  if (s == "road_boundary") return MapKind::road_boundary;
  if (s == "crosswalk") return MapKind::crosswalk;
  throw ValidationError("unknown map kind '" + std::string(s) + "'");
}

std::string_view to_string(ScenarioTemplate t) {
  switch (t) {
    case ScenarioTemplate::straight: return "straight";
    case ScenarioTemplate::left_turn: return "left_turn";
    case ScenarioTemplate::right_turn: return "right_turn";
    case ScenarioTemplate::merge: return "merge";
    case ScenarioTemplate::crossing_conflict: return "crossing_conflict";
  }
  return "straight";
}

ScenarioTemplate template_from_string(std::string_view s) {
  if (s == "straight") return ScenarioTemplate::straight;
  if (s == "left_turn") return ScenarioTemplate::left_turn;
  if (s == "right_turn") return ScenarioTemplate::right_turn;
  if (s == "merge") return ScenarioTemplate::merge;
  if (s == "crossing_conflict") return ScenarioTemplate::crossing_conflict;
  throw ValidationError("unknown scenario template '" + std::string(s) + "'");
}

std::vector<MapPolyline> split_polyline(const MapPolyline& line) {
  if (line.waypoints.size() <= kMaxWaypoints) return {line};
  std::vector<MapPolyline> out;
  std::size_t start = 0;
  while (start + 1 < line.waypoints.size()) {
    const std::size_t end = std::min(start + kMaxWaypoints, line.waypoints.size());
    MapPolyline chunk{{line.waypoints.begin() + static_cast<std::ptrdiff_t>(start),
                       line.waypoints.begin() + static_cast<std::ptrdiff_t>(end)},
                      line.kind};
    out.push_back(std::move(chunk));
    start = end - 1;
  }
  return out;
}

bool Scenario::has_futures() const {
  for (const auto& a : agents)
    if (a.future.size() != future_steps) return false;
  return !agents.empty();
}

namespace {

bool finite_state(const KinematicState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.yaw) &&
         std::isfinite(s.vx) && std::isfinite(s.vy);
}

std::string agent_label(const AgentHistory& a, std::size_t index) {
  return "agent '" + a.id + "' (/agents/" + std::to_string(index) + ")";
}

// JSON readers that report the document path on failure.
double read_number(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "/" + key + ": missing field");
  if (!it->is_number()) {
    throw ValidationError(path + "/" + key + ": expected a number, got " + it->type_name());
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError(path + "/" + key + ": non-finite value");
  return v;
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "/" + key + ": missing field");
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ValidationError(path + "/" + key + ": expected a non-negative integer");
  }
  return it->get<std::size_t>();
}

const json& read_array(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "/" + key + ": missing field");
  if (!it->is_array()) throw ValidationError(path + "/" + key + ": expected an array");
  return *it;
}

std::string read_string(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "/" + key + ": missing field");
  if (!it->is_string()) throw ValidationError(path + "/" + key + ": expected a string");
  return it->get<std::string>();
}

KinematicState read_state(const json& s, const std::string& path) {
  if (!s.is_object()) throw ValidationError(path + ": expected an object");
  return {read_number(s, "x", path), read_number(s, "y", path), read_number(s, "yaw", path),
          read_number(s, "vx", path), read_number(s, "vy", path)};
}

json state_to_json(const KinematicState& s) {
  return {{"x", s.x}, {"y", s.y}, {"yaw", s.yaw}, {"vx", s.vx}, {"vy", s.vy}};
}

}  // namespace

void validate(const Scenario& scn) {
  if (!(scn.dt > 0.0) || !std::isfinite(scn.dt)) throw ValidationError("/dt: must be positive");
  if (scn.future_steps == 0) throw ValidationError("/T: must be at least 1");
  if (scn.agents.empty()) throw ValidationError("/agents: scenario has no agents");
  if (scn.ego_index >= scn.agents.size()) {
    throw ValidationError("/ego_index: " + std::to_string(scn.ego_index) + " out of range for " +
                          std::to_string(scn.agents.size()) + " agents");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < scn.agents.size(); ++i) {
    const AgentHistory& a = scn.agents[i];
    const std::string label = agent_label(a, i);
    if (!ids.insert(a.id).second) throw ValidationError(label + ": duplicate agent id");
    if (!(a.length > 0.0) || !(a.width > 0.0) || !(a.mass > 0.0) || !std::isfinite(a.length) ||
        !std::isfinite(a.width) || !std::isfinite(a.mass)) {
      throw ValidationError(label + ": length, width and mass must be positive and finite");
    }
    if (a.states.size() != scn.history_steps + 1) {
      throw ValidationError(label + ": history has " + std::to_string(a.states.size()) +
                            " states, expected H+1 = " + std::to_string(scn.history_steps + 1));
    }
    if (!a.future.empty() && a.future.size() != scn.future_steps) {
      throw ValidationError(label + ": future has " + std::to_string(a.future.size()) +
                            " states, expected T = " + std::to_string(scn.future_steps));
    }
    for (std::size_t t = 0; t < a.states.size(); ++t) {
      if (!finite_state(a.states[t])) {
        throw ValidationError("/agents/" + std::to_string(i) + "/states/" + std::to_string(t) +
                              ": non-finite value");
      }
    }
    for (std::size_t t = 0; t < a.future.size(); ++t) {
      if (!finite_state(a.future[t])) {
        throw ValidationError("/agents/" + std::to_string(i) + "/future/" + std::to_string(t) +
                              ": non-finite value");
      }
    }
  }
  for (std::size_t m = 0; m < scn.map.size(); ++m) {
    const auto& line = scn.map[m];
    const std::string path = "/map/" + std::to_string(m);
    if (line.waypoints.size() < 2) throw ValidationError(path + ": needs at least 2 waypoints");
    for (std::size_t w = 0; w < line.waypoints.size(); ++w) {
      if (!std::isfinite(line.waypoints[w].x) || !std::isfinite(line.waypoints[w].y)) {
        throw ValidationError(path + "/waypoints/" + std::to_string(w) + ": non-finite value");
      }
    }
  }
}

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("/: expected an object");
  Scenario scn;
  if (auto it = doc.find("id"); it != doc.end() && it->is_string()) scn.id = it->get<std::string>();
  if (auto it = doc.find("template"); it != doc.end()) {
    if (!it->is_string()) throw ValidationError("/template: expected a string");
    scn.source_template = template_from_string(it->get<std::string>());
  }
  scn.dt = read_number(doc, "dt", "");
  scn.history_steps = read_count(doc, "H", "");
  scn.future_steps = read_count(doc, "T", "");
  scn.ego_index = read_count(doc, "ego_index", "");
  const json& agents = read_array(doc, "agents", "");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string path = "/agents/" + std::to_string(i);
    const json& a = agents[i];
    if (!a.is_object()) throw ValidationError(path + ": expected an object");
    AgentHistory h;
    h.id = read_string(a, "id", path);
    try {
      h.agent_class = agent_class_from_string(read_string(a, "class", path));
    } catch (const ValidationError& e) {
      throw ValidationError(path + "/class: " + e.what());
    }
    h.length = read_number(a, "length", path);
    h.width = read_number(a, "width", path);
    h.mass = read_number(a, "mass", path);
    const json& states = read_array(a, "states", path);
    for (std::size_t t = 0; t < states.size(); ++t) {
      h.states.push_back(read_state(states[t], path + "/states/" + std::to_string(t)));
    }
    if (a.contains("future")) {
      const json& future = read_array(a, "future", path);
      for (std::size_t t = 0; t < future.size(); ++t) {
        h.future.push_back(read_state(future[t], path + "/future/" + std::to_string(t)));
      }
    }
    scn.agents.push_back(std::move(h));
  }
  if (doc.contains("map")) {
    const json& map = read_array(doc, "map", "");
    for (std::size_t m = 0; m < map.size(); ++m) {
      const std::string path = "/map/" + std::to_string(m);
      const json& line = map[m];
      if (!line.is_object()) throw ValidationError(path + ": expected an object");
      MapPolyline pl;
      try {
        pl.kind = map_kind_from_string(read_string(line, "kind", path));
      } catch (const ValidationError& e) {
        throw ValidationError(path + "/kind: " + e.what());
      }
      const json& pts = read_array(line, "waypoints", path);
      for (std::size_t w = 0; w < pts.size(); ++w) {
        const std::string wp = path + "/waypoints/" + std::to_string(w);
        const json& p = pts[w];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
          throw ValidationError(wp + ": expected [x, y]");
        }
        Vec2 v{p[0].get<double>(), p[1].get<double>()};
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
          throw ValidationError(wp + ": non-finite value");
        }
        pl.waypoints.push_back(v);
      }
      scn.map.push_back(std::move(pl));
    }
  }
  validate(scn);
  return scn;
}

Scenario load_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("/: malformed JSON: ") + e.what());
  }
  return scenario_from_json(doc);
}

json scenario_to_json(const Scenario& scn) {
  json agents = json::array();
  for (const auto& a : scn.agents) {
    json states = json::array();
    for (const auto& s : a.states) states.push_back(state_to_json(s));
    json agent = {{"id", a.id},         {"class", std::string(to_string(a.agent_class))},
                  {"length", a.length}, {"width", a.width},
                  {"mass", a.mass},     {"states", std::move(states)}};
    if (!a.future.empty()) {
      json future = json::array();
      for (const auto& s : a.future) future.push_back(state_to_json(s));
      agent["future"] = std::move(future);
    }
    agents.push_back(std::move(agent));
  }
  json map = json::array();
  for (const auto& line : scn.map) {
    json pts = json::array();
    for (const auto& p : line.waypoints) pts.push_back({p.x, p.y});
    map.push_back({{"kind", std::string(to_string(line.kind))}, {"waypoints", std::move(pts)}});
  }
  json doc = {{"dt", scn.dt},
              {"H", scn.history_steps},
              {"T", scn.future_steps},
              {"ego_index", scn.ego_index},
              {"agents", std::move(agents)},
              {"map", std::move(map)}};
  if (!scn.id.empty()) doc["id"] = scn.id;
  if (scn.source_template) doc["template"] = std::string(to_string(*scn.source_template));
  return doc;
}

std::string dump_scenario(const Scenario& scn) { return scenario_to_json(scn).dump(1); }

Scenario read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    Scenario scn = load_scenario(buf.str());
    return scn;
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

Scenario local_frame(const Scenario& scn, std::string_view agent_id, double radius) {
  std::size_t target = scn.agents.size();
  for (std::size_t i = 0; i < scn.agents.size(); ++i)
    if (scn.agents[i].id == agent_id) target = i;
  if (target == scn.agents.size()) {
    throw ValidationError("local_frame: unknown agent id '" + std::string(agent_id) + "'");
  }
  const KinematicState& pose = scn.agents[target].states.back();
  const Frame frame{pose.position(), pose.yaw};
  const Vec2 center = pose.position();

  auto transform = [&](const KinematicState& s) {
    const Vec2 p = frame.to_local_point(s.position());
    const Vec2 v = frame.to_local_vector(s.velocity());
    return KinematicState{p.x, p.y, wrap_angle(s.yaw - frame.yaw), v.x, v.y};
  };

  Scenario out = scn;
  out.agents.clear();
  out.map.clear();
  out.ego_index = 0;
  bool ego_kept = false;
  for (std::size_t i = 0; i < scn.agents.size(); ++i) {
    const AgentHistory& a = scn.agents[i];
    if (i != target && (a.states.back().position() - center).norm() > radius) continue;
    AgentHistory b = a;
    for (auto& s : b.states) s = transform(s);
    for (auto& s : b.future) s = transform(s);
    if (i == scn.ego_index) {
      out.ego_index = out.agents.size();
      ego_kept = true;
    }
    out.agents.push_back(std::move(b));
  }
  if (!ego_kept) {
    for (std::size_t i = 0; i < out.agents.size(); ++i)
      if (out.agents[i].id == agent_id) out.ego_index = i;
  }
  for (const auto& line : scn.map) {
    bool near = false;
    for (const auto& p : line.waypoints) near = near || (p - center).norm() <= radius;
    if (!near) continue;
    MapPolyline l = line;
    for (auto& p : l.waypoints) p = frame.to_local_point(p);
    out.map.push_back(std::move(l));
  }
  return out;
}

}  // namespace riskcast
