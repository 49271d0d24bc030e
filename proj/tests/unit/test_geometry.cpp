#include <doctest.h>

#include <cmath>
#include <numbers>

#include "riskcast/core/param.hpp"
#include "riskcast/geometry.hpp"

using namespace riskcast;
constexpr double kPi = std::numbers::pi;

namespace {

AgentState moving(Vec2 p, Vec2 v, double yaw = 0.0) {
  AgentState a;
  a.position = p;
  a.velocity = v;
  a.yaw = yaw;
  return a;
}

AgentState transformed(const AgentState& a, double rot, Vec2 shift) {
  const Frame f{shift, rot};  // to_world_* rotates by +rot then adds shift
  AgentState b = a;
  b.position = f.to_world_point(a.position);
  b.velocity = f.to_world_vector(a.velocity);
  b.yaw = a.yaw + rot;
  return b;
}

}  // namespace

TEST_CASE("relative_encoding examples") {
  RelEncoding r = relative_encoding(moving({0, 0}, {1, 0}), moving({3, 4}, {1, 0}));
  CHECK(r.sin_heading_diff == 0.0);
  CHECK(r.cos_heading_diff == 1.0);
  CHECK(r.distance == 5.0);
  r = relative_encoding(moving({0, 0}, {1, 0}), moving({0, 0}, {0, 1}));
  CHECK(r.sin_heading_diff == doctest::Approx(1.0));
  CHECK(std::abs(r.cos_heading_diff) < 1e-15);
  CHECK(r.sin_bearing == 0.0);  // coincident fallback
  CHECK(r.cos_bearing == 1.0);
}

TEST_CASE("stationary agents fall back to yaw") {
  const AgentState a = moving({0, 0}, {0, 0}, kPi / 2);
  const Vec2 u = motion_direction(a);
  CHECK(std::abs(u.x) < 1e-15);
  CHECK(u.y == doctest::Approx(1.0));
  const RelEncoding r = relative_encoding(a, moving({1, 1}, {0, 0}, kPi / 2));
  CHECK(r.cos_heading_diff == doctest::Approx(1.0));
  CHECK(std::isfinite(r.sin_bearing));
}

TEST_CASE("relative_encoding is rigid-motion invariant and well formed") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const AgentState i = moving({rng.uniform(-50, 50), rng.uniform(-50, 50)},
                                {rng.uniform(-15, 15), rng.uniform(-15, 15)}, rng.uniform(-kPi, kPi));
    const AgentState j = moving({rng.uniform(-50, 50), rng.uniform(-50, 50)},
                                {rng.uniform(-15, 15), rng.uniform(-15, 15)}, rng.uniform(-kPi, kPi));
    const double rot = rng.uniform(-kPi, kPi);
    const Vec2 shift{rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3)};
    const RelEncoding a = relative_encoding(i, j);
    const RelEncoding b = relative_encoding(transformed(i, rot, shift), transformed(j, rot, shift));
    CHECK(std::abs(a.sin_heading_diff - b.sin_heading_diff) < 1e-9);
    CHECK(std::abs(a.cos_heading_diff - b.cos_heading_diff) < 1e-9);
    CHECK(std::abs(a.sin_bearing - b.sin_bearing) < 1e-9);
    CHECK(std::abs(a.cos_bearing - b.cos_bearing) < 1e-9);
    CHECK(std::abs(a.distance - b.distance) < 1e-9);

    CHECK(std::abs(a.sin_heading_diff * a.sin_heading_diff + a.cos_heading_diff * a.cos_heading_diff - 1) < 1e-9);
    CHECK(std::abs(a.sin_bearing * a.sin_bearing + a.cos_bearing * a.cos_bearing - 1) < 1e-9);

    const RelEncoding back = relative_encoding(j, i);
    CHECK(back.distance == a.distance);
    CHECK(std::abs(back.sin_heading_diff + a.sin_heading_diff) < 1e-12);
    CHECK(std::abs(back.cos_heading_diff - a.cos_heading_diff) < 1e-12);
  }
}

TEST_CASE("body_points") {
  AgentState a;
  a.length = 4.0;
  BodyPoints b = body_points(a);
  CHECK(b.front == Vec2{2, 0});
  CHECK(b.rear == Vec2{-2, 0});
  a.yaw = kPi / 2;
  b = body_points(a);
  CHECK(std::abs(b.front.x) < 1e-15);
  CHECK(b.front.y == doctest::Approx(2.0));
  a.yaw = kPi;
  b = body_points(a);
  CHECK(b.front.x == doctest::Approx(-2.0));

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    a.position = {rng.uniform(-100, 100), rng.uniform(-100, 100)};
    a.yaw = rng.uniform(-kPi, kPi);
    a.length = rng.uniform(0.3, 18);
    b = body_points(a);
    CHECK(std::abs((b.front - b.rear).norm() - a.length) < 1e-12);
    CHECK(((b.front + b.rear) * 0.5 - b.center).norm() < 1e-12);
  }
}

TEST_CASE("collision_angle analytic cases") {
  CHECK(collision_angle(moving({0, 0}, {3, 0}), moving({5, 5}, {7, 0})) == 0.0);
  CHECK(collision_angle(moving({0, 0}, {3, 0}), moving({5, 0}, {-2, 0})) == kPi);
  CHECK(collision_angle(moving({0, 0}, {3, 0}), moving({5, 0}, {0, 4})) == kPi / 2);
  CHECK(collision_angle(moving({0, 0}, {0, 0}, 0.0), moving({5, 0}, {0, 0}, kPi)) == kPi);
}

TEST_CASE("impact regions") {
  AgentState struck = moving({0, 0}, {5, 0});
  CHECK(impact_region(struck, {10, 1}) == ImpactRegion::front);
  CHECK(impact_region(struck, {0, 3}) == ImpactRegion::side);
  CHECK(impact_region(struck, {0, -3}) == ImpactRegion::side);
  CHECK(impact_region(struck, {-10, -1}) == ImpactRegion::rear);
  CHECK(impact_region(struck, {0, 0}) == ImpactRegion::side);
}

TEST_CASE("agent class flags and names") {
  CHECK(is_protected(AgentClass::car));
  CHECK(is_protected(AgentClass::truck));
  CHECK_FALSE(is_protected(AgentClass::pedestrian));
  CHECK_FALSE(is_protected(AgentClass::cyclist));
  for (auto c : {AgentClass::car, AgentClass::truck, AgentClass::pedestrian, AgentClass::cyclist}) {
    CHECK(agent_class_from_string(to_string(c)) == c);
  }
  CHECK(std::abs(wrap_angle(3 * kPi)) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.5 + 4 * kPi) == doctest::Approx(0.5));
}

TEST_CASE("frame round trip") {
  const Frame f{{3, -2}, 0.7};
  const Vec2 p{1.5, 8};
  const Vec2 q = f.to_world_point(f.to_local_point(p));
  CHECK((q - p).norm() < 1e-12);
  const Vec2 o = f.to_local_point({3, -2});
  CHECK(o.norm() < 1e-15);
}
