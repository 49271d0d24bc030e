#include <doctest.h>

#include <cmath>
#include <limits>

#include "riskcast/core/error.hpp"
#include "riskcast/intention.hpp"
#include "riskcast/scene.hpp"

using namespace riskcast;
using nlohmann::json;

namespace {

const ScenarioTemplate kTemplates[] = {ScenarioTemplate::straight, ScenarioTemplate::left_turn,
                                       ScenarioTemplate::right_turn, ScenarioTemplate::merge,
                                       ScenarioTemplate::crossing_conflict};

std::vector<KinematicState> full_track(const AgentHistory& a) {
  std::vector<KinematicState> out = a.states;
  out.insert(out.end(), a.future.begin(), a.future.end());
  return out;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("scenario JSON round trip") {
  for (auto tpl : kTemplates) {
    const Scenario scn = generate_scenario(tpl, 4, 17);
    const Scenario back = load_scenario(dump_scenario(scn));
    CHECK(back == scn);
  }
}

TEST_CASE("scenario validation errors name the offender") {
  Scenario scn = generate_scenario(ScenarioTemplate::straight, 3, 5);
  json doc = scenario_to_json(scn);

  SUBCASE("short history") {
    doc["agents"][1]["states"].erase(doc["agents"][1]["states"].size() - 1);
    const std::string msg = error_of([&] { scenario_from_json(doc); });
    CHECK(msg.find(scn.agents[1].id) != std::string::npos);
    CHECK(msg.find("history has 10 states") != std::string::npos);
  }
  SUBCASE("non-finite coordinate") {
    doc["agents"][2]["future"][7]["y"] = std::numeric_limits<double>::infinity();
    const std::string msg = error_of([&] { scenario_from_json(doc); });
    CHECK(msg.find("/agents/2/future/7/y") != std::string::npos);
  }
  SUBCASE("wrong type") {
    doc["map"][0]["waypoints"][1] = "oops";
    CHECK(error_of([&] { scenario_from_json(doc); }).find("/map/0/waypoints/1") != std::string::npos);
  }
  SUBCASE("bad ego index") {
    doc["ego_index"] = 9;
    CHECK(error_of([&] { scenario_from_json(doc); }).find("/ego_index") != std::string::npos);
  }
  SUBCASE("malformed text") { CHECK_THROWS_AS(load_scenario("{not json"), ValidationError); }
}

TEST_CASE("generator determinism and kinematic consistency") {
  for (auto tpl : kTemplates) {
    CHECK(dump_scenario(generate_scenario(tpl, 5, 99)) == dump_scenario(generate_scenario(tpl, 5, 99)));
    CHECK(dump_scenario(generate_scenario(tpl, 5, 99)) != dump_scenario(generate_scenario(tpl, 5, 100)));
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Scenario scn = generate_scenario(tpl, 4, seed);
      REQUIRE_NOTHROW(validate(scn));
      for (const auto& a : scn.agents) {
        const auto track = full_track(a);
        for (std::size_t t = 0; t + 1 < track.size(); ++t) {
          const Vec2 step = track[t + 1].position() - track[t].position() - track[t].velocity() * scn.dt;
          CHECK(step.norm() < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("constant speed straight ego moves exactly v dt per step") {
  GeneratorConfig cfg;
  cfg.accel_noise = 0.0;
  cfg.yaw_rate_noise = 0.0;
  int tested = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario scn = generate_scenario(ScenarioTemplate::straight, 1, seed, cfg);
    const auto track = full_track(scn.ego());
    if (std::abs(track.back().speed() - track.front().speed()) > 1e-12) continue;  // accelerating draw
    ++tested;
    const double v = track.front().speed();
    for (std::size_t t = 0; t + 1 < track.size(); ++t) {
      CHECK(std::abs((track[t + 1].position() - track[t].position()).norm() - v * scn.dt) < 1e-9);
    }
  }
  CHECK(tested > 0);
}

TEST_CASE("template labels match the auto-labeller") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CHECK(label_intentions(generate_scenario(ScenarioTemplate::straight, 3, seed).ego()).lateral == Lateral::ST);
    CHECK(label_intentions(generate_scenario(ScenarioTemplate::left_turn, 3, seed).ego()).lateral == Lateral::LT);
    CHECK(label_intentions(generate_scenario(ScenarioTemplate::right_turn, 3, seed).ego()).lateral == Lateral::RT);
  }
}

TEST_CASE("crossing_conflict always has a close pair") {
  for (std::size_t n : {1, 2, 5}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Scenario scn = generate_scenario(ScenarioTemplate::crossing_conflict, n, seed);
      REQUIRE(scn.agents.size() >= 2);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < scn.agents.size(); ++i)
        for (std::size_t j = i + 1; j < scn.agents.size(); ++j)
          for (std::size_t t = 0; t < scn.future_steps; ++t)
            best = std::min(best, (scn.agents[i].future[t].position() - scn.agents[j].future[t].position()).norm());
      CHECK(best < 2.0);
    }
  }
}

TEST_CASE("short horizons stay deterministic") {
  GeneratorConfig cfg;
  cfg.history_steps = 3;
  cfg.future_steps = 4;
  for (auto tpl : kTemplates)
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const Scenario scn = generate_scenario(tpl, 3, seed, cfg);
      REQUIRE_NOTHROW(validate(scn));
      CHECK(dump_scenario(scn) == dump_scenario(generate_scenario(tpl, 3, seed, cfg)));
      if (tpl == ScenarioTemplate::crossing_conflict)
        CHECK((scn.agents[0].future.back().position() - scn.agents[1].future.back().position()).norm() < 1.0);
    }
}

TEST_CASE("split_polyline shares boundary waypoints") {
  MapPolyline line;
  for (int i = 0; i < 45; ++i) line.waypoints.push_back({double(i), 0.0});
  const auto parts = split_polyline(line);
  REQUIRE(parts.size() == 3);
  for (const auto& p : parts) CHECK(p.waypoints.size() <= kMaxWaypoints);
  CHECK(parts[0].waypoints.back() == parts[1].waypoints.front());
  CHECK(parts.back().waypoints.back() == line.waypoints.back());
}

TEST_CASE("local_frame") {
  const Scenario scn = generate_scenario(ScenarioTemplate::merge, 5, 3);
  for (const auto& target : scn.agents) {
    const Scenario loc = local_frame(scn, target.id);
    const AgentHistory* t = nullptr;
    for (const auto& a : loc.agents)
      if (a.id == target.id) t = &a;
    REQUIRE(t != nullptr);
    CHECK(t->states.back().position().norm() < 1e-9);
    CHECK(std::abs(t->states.back().yaw) < 1e-12);
    REQUIRE(loc.agents.size() == scn.agents.size());
    for (std::size_t i = 0; i < scn.agents.size(); ++i) {
      for (std::size_t j = 0; j < scn.agents.size(); ++j) {
        for (std::size_t s = 0; s < scn.agents[i].states.size(); s += 3) {
          const RelEncoding a = relative_encoding(scn.agents[i].at(scn.agents[i].states[s]),
                                                  scn.agents[j].at(scn.agents[j].states[s]));
          const RelEncoding b = relative_encoding(loc.agents[i].at(loc.agents[i].states[s]),
                                                  loc.agents[j].at(loc.agents[j].states[s]));
          CHECK(std::abs(a.distance - b.distance) < 1e-9);
          CHECK(std::abs(a.sin_heading_diff - b.sin_heading_diff) < 1e-9);
          CHECK(std::abs(a.cos_bearing - b.cos_bearing) < 1e-9);
          CHECK(std::abs(a.sin_bearing - b.sin_bearing) < 1e-9);
        }
      }
    }
  }

  Scenario far = generate_scenario(ScenarioTemplate::straight, 2, 4);
  const Vec2 ego0 = far.ego().states.back().position();
  const Vec2 other0 = far.agents[1].states.back().position();
  const Vec2 shift = ego0 + Vec2{80.0, 0.0} - other0;
  for (auto* track : {&far.agents[1].states, &far.agents[1].future})
    for (auto& s : *track) s.x += shift.x, s.y += shift.y;
  CHECK(local_frame(far, far.ego().id, 50.0).agents.size() == 1);
  CHECK(local_frame(far, far.ego().id, 100.0).agents.size() == 2);
  CHECK_THROWS_AS(local_frame(far, "nobody"), ValidationError);
}
