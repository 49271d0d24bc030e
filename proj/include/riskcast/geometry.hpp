#pragma once

#include <cmath>
#include <string>
#include <string_view>

namespace riskcast {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  /// z-component of the 3-D cross product.
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline Vec2 heading_vector(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }
double wrap_angle(double a);

enum class AgentClass { car, truck, pedestrian, cyclist };

std::string_view to_string(AgentClass c);
AgentClass agent_class_from_string(std::string_view s);
/// Vehicle occupants are protected; pedestrians and cyclists are not.
inline bool is_protected(AgentClass c) { return c == AgentClass::car || c == AgentClass::truck; }

/// Full state of one agent at one instant.
struct AgentState {
  Vec2 position;       // m
  double yaw = 0.0;    // rad
  Vec2 velocity;       // m/s
  double length = 4.5; // m
  double width = 1.8;  // m
  double mass = 1500.0;  // kg
  AgentClass agent_class = AgentClass::car;

  bool protected_flag() const { return is_protected(agent_class); }
};

/// Speeds below this use the yaw direction as the motion direction.
inline constexpr double kMinSpeed = 1e-6;
/// Separations below this use the coincident-position bearing fallback.
inline constexpr double kMinDistance = 1e-6;

/// Unit direction of motion; yaw direction for (near-)stationary agents.
Vec2 motion_direction(const AgentState& a);

/// Heading difference, bearing and distance between two agents, with
/// d = p_j - p_i:
///   sin a = u_i x u_j, cos a = u_i . u_j
///   sin b = d^ x u_j,  cos b = d^ . u_j
/// where u are unit motion directions.
struct RelEncoding {
  double sin_heading_diff = 0.0;
  double cos_heading_diff = 1.0;
  double sin_bearing = 0.0;
  double cos_bearing = 1.0;
  double distance = 0.0;
};

RelEncoding relative_encoding(const AgentState& i, const AgentState& j);

struct BodyPoints {
  Vec2 front;
  Vec2 center;
  Vec2 rear;
};

/// Front/rear are the center shifted by +-length/2 along the yaw direction.
BodyPoints body_points(const AgentState& a);

/// Angle in [0, pi] between the two motion directions.
double collision_angle(const AgentState& i, const AgentState& j);

enum class ImpactRegion { front, side, rear };

std::string_view to_string(ImpactRegion r);

/// Region of `struck` hit by a partner located at `partner_position`. The
/// bearing relative to struck's heading is folded to [0, pi]; <= pi/4 is
/// front, >= 3pi/4 is rear, otherwise side.
ImpactRegion impact_region(const AgentState& struck, Vec2 partner_position);

/// Rigid 2-D transform mapping world coordinates into a frame whose origin
/// is `origin` and whose x-axis points along `yaw`.
struct Frame {
  Vec2 origin;
  double yaw = 0.0;

  Vec2 to_local_point(Vec2 p) const;
  Vec2 to_local_vector(Vec2 v) const;
  Vec2 to_world_point(Vec2 p) const;
  Vec2 to_world_vector(Vec2 v) const;
  AgentState to_local(const AgentState& s) const;
};

}  // namespace riskcast
