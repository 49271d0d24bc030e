#include "riskcast/geometry.hpp"

#include <algorithm>
#include <numbers>

#include "riskcast/core/error.hpp"

namespace riskcast {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

std::string_view to_string(AgentClass c) {
  switch (c) {
    case AgentClass::car: return "car";
    case AgentClass::truck: return "truck";
    case AgentClass::pedestrian: return "pedestrian";
    case AgentClass::cyclist: return "cyclist";
  }
  return "car";
}

AgentClass agent_class_from_string(std::string_view s) {
  if (s == "car") return AgentClass::car;
  if (s == "truck") return AgentClass::truck;
  if (s == "pedestrian") return AgentClass::pedestrian;
  if (s == "cyclist") return AgentClass::cyclist;
  throw ValidationError("unknown agent class '" + std::string(s) + "'");
}

std::string_view to_string(ImpactRegion r) {
  switch (r) {
    case ImpactRegion::front: return "front";
    case ImpactRegion::side: return "side";
    case ImpactRegion::rear: return "rear";
  }
  return "side";
}

Vec2 motion_direction(const AgentState& a) {
  const double speed = a.velocity.norm();
  if (speed < kMinSpeed) return heading_vector(a.yaw);
  return a.velocity * (1.0 / speed);
}

RelEncoding relative_encoding(const AgentState& i, const AgentState& j) {
  const Vec2 ui = motion_direction(i);
  const Vec2 uj = motion_direction(j);
  const Vec2 d = j.position - i.position;
  RelEncoding r;
  r.sin_heading_diff = ui.cross(uj);
  r.cos_heading_diff = ui.dot(uj);
  r.distance = d.norm();
  if (r.distance >= kMinDistance) {
    const Vec2 dn = d * (1.0 / r.distance);
    r.sin_bearing = dn.cross(uj);
    r.cos_bearing = dn.dot(uj);
  }
  return r;
}

BodyPoints body_points(const AgentState& a) {
  const Vec2 half = heading_vector(a.yaw) * (0.5 * a.length);
  return {a.position + half, a.position, a.position - half};
}

double collision_angle(const AgentState& i, const AgentState& j) {
  const Vec2 ui = motion_direction(i);
  const Vec2 uj = motion_direction(j);
  return std::atan2(std::abs(ui.cross(uj)), ui.dot(uj));
}

ImpactRegion impact_region(const AgentState& struck, Vec2 partner_position) {
  const Vec2 d = partner_position - struck.position;
  if (d.norm() < kMinDistance) return ImpactRegion::side;
  const Vec2 h = heading_vector(struck.yaw);
  const double bearing = std::atan2(std::abs(h.cross(d)), h.dot(d));
  if (bearing <= std::numbers::pi / 4.0) return ImpactRegion::front;
  if (bearing >= 3.0 * std::numbers::pi / 4.0) return ImpactRegion::rear;
  return ImpactRegion::side;
}

Vec2 Frame::to_local_vector(Vec2 v) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

Vec2 Frame::to_local_point(Vec2 p) const { return to_local_vector(p - origin); }

Vec2 Frame::to_world_vector(Vec2 v) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 Frame::to_world_point(Vec2 p) const { return origin + to_world_vector(p); }

AgentState Frame::to_local(const AgentState& s) const {
  AgentState out = s;
  out.position = to_local_point(s.position);
  out.velocity = to_local_vector(s.velocity);
  out.yaw = wrap_angle(s.yaw - yaw);
  return out;
}

}  // namespace riskcast
