#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "riskcast/core/param.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLaneWidth = 3.5;
constexpr double kMaxSpeed = 25.0;

struct Body {
  AgentClass cls;
  double length, width, mass;
};

Body sample_body(AgentClass cls, Rng& rng) {
  switch (cls) {
    case AgentClass::car: return {cls, rng.uniform(4.2, 4.9), rng.uniform(1.75, 2.0), rng.uniform(1300, 1900)};
    case AgentClass::truck: return {cls, rng.uniform(8.0, 12.0), 2.5, rng.uniform(8000, 15000)};
    case AgentClass::pedestrian: return {cls, 0.5, 0.6, rng.uniform(55, 90)};
    case AgentClass::cyclist: return {cls, 1.8, 0.6, rng.uniform(80, 100)};
  }
  return {AgentClass::car, 4.5, 1.8, 1500};
}

/// Commanded controls over time; t = 0 is the current instant.
struct Profile {
  double accel = 0.0;
  std::vector<std::tuple<double, double, double>> yaw_segments;  // [begin, end), rate

  double yaw_increment(double t, double dt) const {
    double d = 0.0;
    for (const auto& [b, e, rate] : yaw_segments) {
      const double overlap = std::min(e, t + dt) - std::max(b, t);
      if (overlap > 0.0) d += rate * overlap;
    }
    return d;
  }
};

struct Start {
  Vec2 position;
  double yaw = 0.0;
  double speed = 0.0;
};

/// Unicycle rollout from t = -H dt over H + T + 1 states. Each state's
/// velocity is speed * heading and the next position adds velocity * dt, so
/// positions integrate the recorded velocities exactly.
std::vector<KinematicState> simulate(const Start& start, const Profile& profile,
                                     const GeneratorConfig& cfg, Rng* noise) {
  const std::size_t n = cfg.history_steps + cfg.future_steps + 1;
  std::vector<KinematicState> out;
  out.reserve(n);
  Vec2 p = start.position;
  double yaw = start.yaw;
  double speed = start.speed;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = (static_cast<double>(k) - static_cast<double>(cfg.history_steps)) * cfg.dt;
    const Vec2 v = heading_vector(yaw) * speed;
    out.push_back({p.x, p.y, wrap_angle(yaw), v.x, v.y});
    p = p + v * cfg.dt;
    double a = profile.accel;
    double yaw_step = profile.yaw_increment(t, cfg.dt);
    if (noise) {
      if (cfg.accel_noise > 0.0) a += noise->normal(0.0, cfg.accel_noise);
      if (cfg.yaw_rate_noise > 0.0) yaw_step += noise->normal(0.0, cfg.yaw_rate_noise) * cfg.dt;
    }
    speed = std::clamp(speed + a * cfg.dt, 0.0, kMaxSpeed);
    yaw += yaw_step;
  }
  return out;
}

Start start_for(Vec2 position_at_zero, double yaw, double speed, const GeneratorConfig& cfg) {
  const double back = speed * cfg.dt * static_cast<double>(cfg.history_steps);
  return {position_at_zero - heading_vector(yaw) * back, yaw, speed};
}

std::vector<Vec2> resample(const std::vector<KinematicState>& path, double spacing) {
  std::vector<Vec2> pts{path.front().position()};
  for (const auto& s : path) {
    if ((s.position() - pts.back()).norm() >= spacing) pts.push_back(s.position());
  }
  if ((path.back().position() - pts.back()).norm() > 1e-6) pts.push_back(path.back().position());
  return pts;
}

std::vector<Vec2> straight_line(Vec2 from, Vec2 to, double spacing) {
  const double len = (to - from).norm();
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / spacing)));
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i <= n; ++i) {
    pts.push_back(from + (to - from) * (static_cast<double>(i) / static_cast<double>(n)));
  }
  return pts;
}

std::vector<Vec2> offset_line(const std::vector<Vec2>& pts, double offset) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 a = pts[i == 0 ? 0 : i - 1];
    const Vec2 b = pts[i + 1 < pts.size() ? i + 1 : i];
    Vec2 d = b - a;
    const double len = d.norm();
    d = len > 0 ? d * (1.0 / len) : Vec2{1, 0};
    out.push_back(pts[i] + Vec2{-d.y, d.x} * offset);
  }
  return out;
}

class Builder {
 public:
  Builder(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

  void add_agent(const Body& body, const Start& start, const Profile& profile) {
    auto states = simulate(start, profile, cfg_, &rng_);
    AgentHistory a;
    a.id = agents_.empty() ? "ego" : "a" + std::to_string(agents_.size());
    a.agent_class = body.cls;
    a.length = body.length;
    a.width = body.width;
    a.mass = body.mass;
    a.states.assign(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(cfg_.history_steps + 1));
    a.future.assign(states.begin() + static_cast<std::ptrdiff_t>(cfg_.history_steps + 1), states.end());
    agents_.push_back(std::move(a));
  }

  void add_line(std::vector<Vec2> pts, MapKind kind) {
    for (auto& piece : split_polyline({std::move(pts), kind})) map_.push_back(std::move(piece));
  }

  /// Straight road along +x through the origin with `lanes` lanes centred on y = 0.
  void add_road(const std::vector<double>& lane_offsets) {
    for (double y : lane_offsets) add_line(straight_line({-60, y}, {120, y}, 5.0), MapKind::lane_center);
    const double lo = *std::min_element(lane_offsets.begin(), lane_offsets.end()) - kLaneWidth / 2;
    const double hi = *std::max_element(lane_offsets.begin(), lane_offsets.end()) + kLaneWidth / 2;
    add_line(straight_line({-60, lo}, {120, lo}, 5.0), MapKind::road_boundary);
    add_line(straight_line({-60, hi}, {120, hi}, 5.0), MapKind::road_boundary);
  }

  /// Background traffic on lanes parallel to the ego road, kept clear of the ego.
  void add_background(std::size_t count, const std::vector<double>& lanes) {
    for (std::size_t i = 0; i < count; ++i) {
      const double lane = lanes[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(lanes.size()) - 1))];
      const double sign = rng_.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
      double x = sign * rng_.uniform(12.0, 40.0) + static_cast<double>(i) * 3.0;
      if (std::abs(lane) < 1e-9 && std::abs(x) < 15.0) x = std::copysign(15.0 + std::abs(x), x);
      const bool oncoming = lane > 0.0 && rng_.uniform(0, 1) < 0.5;
      const double yaw = oncoming ? kPi : 0.0;
      const double r = rng_.uniform(0, 1);
      const AgentClass cls = r < 0.8 ? AgentClass::car : (r < 0.92 ? AgentClass::truck : AgentClass::cyclist);
      const Body body = sample_body(cls, rng_);
      const double speed = cls == AgentClass::cyclist ? rng_.uniform(3, 6) : rng_.uniform(6, 14);
      Profile prof;
      prof.accel = rng_.uniform(0, 1) < 0.4 ? 0.0 : rng_.uniform(-1.0, 1.0);
      add_agent(body, start_for({x, lane}, yaw, speed, cfg_), prof);
    }
  }

  std::vector<AgentHistory>& agents() { return agents_; }

  Scenario finish(ScenarioTemplate tpl) {
    // Random global pose so nothing downstream can rely on the canonical frame.
    const double theta = rng_.uniform(-kPi, kPi);
    const Vec2 shift{rng_.uniform(-200, 200), rng_.uniform(-200, 200)};
    const Frame to_world{shift, theta};
    auto move = [&](KinematicState& s) {
      const Vec2 p = to_world.to_world_point(s.position());
      const Vec2 v = to_world.to_world_vector(s.velocity());
      s = {p.x, p.y, wrap_angle(s.yaw + theta), v.x, v.y};
    };
    Scenario scn;
    scn.dt = cfg_.dt;
    scn.history_steps = cfg_.history_steps;
    scn.future_steps = cfg_.future_steps;
    scn.ego_index = 0;
    scn.source_template = tpl;
    for (auto& a : agents_) {
      for (auto& s : a.states) move(s);
      for (auto& s : a.future) move(s);
    }
    for (auto& line : map_)
      for (auto& p : line.waypoints) p = to_world.to_world_point(p);
    scn.agents = std::move(agents_);
    scn.map = std::move(map_);
    return scn;
  }

  const GeneratorConfig& cfg() const { return cfg_; }
  Rng& rng() { return rng_; }

 private:
  const GeneratorConfig& cfg_;
  Rng& rng_;
  std::vector<AgentHistory> agents_;
  std::vector<MapPolyline> map_;
};

void build_straight(Builder& b, std::size_t n) {
  Rng& rng = b.rng();
  const double v0 = rng.uniform(6, 14);
  Profile prof;
  prof.accel = rng.uniform(0, 1) < 1.0 / 3.0 ? 0.0 : rng.uniform(-1.5, 1.5);
  b.add_agent(sample_body(AgentClass::car, rng), start_for({0, 0}, 0.0, v0, b.cfg()), prof);
  b.add_road({-kLaneWidth, 0.0, kLaneWidth});
  b.add_background(n - 1, {-kLaneWidth, 0.0, kLaneWidth});
}

void build_turn(Builder& b, std::size_t n, double side) {
  Rng& rng = b.rng();
  const double v0 = rng.uniform(5, 10);
  const double radius = rng.uniform(8, 16);
  const double rate = side * v0 / radius;
  const double t_start = rng.uniform(-0.6, 0.8);
  Profile prof;
  prof.accel = rng.uniform(-0.4, 0.4);
  prof.yaw_segments.emplace_back(t_start, t_start + (kPi / 2) / std::abs(rate), rate);
  const Start start = start_for({0, 0}, 0.0, v0, b.cfg());
  b.add_agent(sample_body(AgentClass::car, rng), start, prof);
  // The turning lane follows the nominal (noise-free) manoeuvre.
  const auto nominal = simulate(start, prof, b.cfg(), nullptr);
  const auto lane = resample(nominal, 2.0);
  b.add_line(lane, MapKind::lane_center);
  b.add_line(offset_line(lane, kLaneWidth), MapKind::road_boundary);
  b.add_line(offset_line(lane, -kLaneWidth), MapKind::road_boundary);
  const double through_lane = -side * kLaneWidth;
  b.add_line(straight_line({-60, through_lane}, {120, through_lane}, 5.0), MapKind::lane_center);
  b.add_background(n - 1, {through_lane, -through_lane});
}

void build_merge(Builder& b, std::size_t n) {
  Rng& rng = b.rng();
  const double v0 = rng.uniform(7, 13);
  const double peak = rng.uniform(0.12, 0.2);
  const double tau = rng.uniform(1.0, 2.0);
  const double t_start = rng.uniform(-0.5, 1.0);
  Profile prof;
  prof.accel = rng.uniform(-0.5, 0.8);
  prof.yaw_segments.emplace_back(t_start, t_start + tau, peak / tau);
  prof.yaw_segments.emplace_back(t_start + tau, t_start + 2 * tau, -peak / tau);
  const Start start = start_for({0, -kLaneWidth}, 0.0, v0, b.cfg());
  b.add_agent(sample_body(AgentClass::car, rng), start, prof);
  const auto lane = resample(simulate(start, prof, b.cfg(), nullptr), 2.0);
  b.add_line(lane, MapKind::lane_center);
  b.add_road({0.0, kLaneWidth});
  b.add_background(n - 1, {0.0, kLaneWidth});
}

void build_crossing(Builder& b, std::size_t n) {
  Rng& rng = b.rng();
  const GeneratorConfig& cfg = b.cfg();
  const double v0 = rng.uniform(6, 12);
  Profile ego_prof;
  ego_prof.accel = rng.uniform(-0.3, 0.3);
  const Start ego_start = start_for({0, 0}, 0.0, v0, cfg);
  b.add_agent(sample_body(AgentClass::car, rng), ego_start, ego_prof);
  b.add_road({0.0, kLaneWidth});

  const double r = rng.uniform(0, 1);
  const AgentClass cls = r < 0.4 ? AgentClass::pedestrian : (r < 0.7 ? AgentClass::cyclist : AgentClass::car);
  const double speed = cls == AgentClass::pedestrian ? rng.uniform(1.0, 1.8)
                       : cls == AgentClass::cyclist  ? rng.uniform(3.0, 6.0)
                                                     : rng.uniform(5.0, 10.0);
  const double dir = rng.uniform(0, 1) < 0.5 ? 1.0 : -1.0;
  // Short horizons pull the conflict back to the last simulated step.
  const auto k_conflict =
      cfg.history_steps + std::min(cfg.future_steps, static_cast<std::size_t>(std::lround(rng.uniform(1.5, 4.0) / cfg.dt)));
  const double t_conflict = static_cast<double>(k_conflict - cfg.history_steps) * cfg.dt;
  const auto ego_nominal = simulate(ego_start, ego_prof, cfg, nullptr);
  const Vec2 meet = ego_nominal[k_conflict].position();
  const double yaw = dir * kPi / 2;
  const Vec2 at_zero = meet - heading_vector(yaw) * (speed * t_conflict);
  b.add_agent(sample_body(cls, rng), start_for(at_zero, yaw, speed, cfg), Profile{});

  // Translate the crosser so that it is within lateral_miss of the ego at
  // the conflict step regardless of process noise.
  auto& agents = b.agents();
  const double lateral_miss = rng.uniform(-0.8, 0.8);
  auto state_at = [&](const AgentHistory& a, std::size_t k) -> const KinematicState& {
    return k <= cfg.history_steps ? a.states[k] : a.future[k - cfg.history_steps - 1];
  };
  const Vec2 target = state_at(agents[0], k_conflict).position() + Vec2{lateral_miss, 0.0};
  const Vec2 shift = target - state_at(agents[1], k_conflict).position();
  for (auto& s : agents[1].states) s.x += shift.x, s.y += shift.y;
  for (auto& s : agents[1].future) s.x += shift.x, s.y += shift.y;

  const Vec2 cross_dir{0.0, 1.0};
  const MapKind kind = cls == AgentClass::pedestrian ? MapKind::crosswalk : MapKind::lane_center;
  b.add_line(straight_line(target - cross_dir * 40.0, target + cross_dir * 40.0, 5.0), kind);
  if (n > 2) b.add_background(n - 2, {kLaneWidth});
}

}  // namespace

Scenario generate_scenario(ScenarioTemplate tpl, std::size_t n_agents, std::uint64_t seed,
                           const GeneratorConfig& cfg) {
  Rng rng(seed);
  Builder b(cfg, rng);
  const std::size_t n = std::max<std::size_t>(1, n_agents);
  switch (tpl) {
    case ScenarioTemplate::straight: build_straight(b, n); break;
    case ScenarioTemplate::left_turn: build_turn(b, n, 1.0); break;
    case ScenarioTemplate::right_turn: build_turn(b, n, -1.0); break;
    case ScenarioTemplate::merge: build_merge(b, n); break;
    case ScenarioTemplate::crossing_conflict: build_crossing(b, std::max<std::size_t>(2, n)); break;
  }
  Scenario scn = b.finish(tpl);
  scn.id = std::string(to_string(tpl)) + "_" + std::to_string(seed);
  return scn;
}

}  // namespace riskcast
