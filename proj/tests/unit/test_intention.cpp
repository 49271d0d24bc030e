#include <doctest.h>

#include <cmath>
#include <numbers>

#include "riskcast/core/error.hpp"
#include "riskcast/core/functional.hpp"
#include "riskcast/core/grad_check.hpp"
#include "riskcast/evaluation.hpp"
#include "riskcast/model.hpp"
#include "util.hpp"

using namespace riskcast;
using testutil::find_param;

namespace {

std::vector<KinematicState> straight_future(double v0, double v1, double yaw0, double yaw1, std::size_t t) {
  std::vector<KinematicState> out;
  for (std::size_t k = 1; k <= t; ++k) {
    const double a = double(k) / double(t);
    const double v = v0 + (v1 - v0) * a;
    const double yaw = yaw0 + (yaw1 - yaw0) * a;
    out.push_back({0, 0, yaw, v * std::cos(yaw), v * std::sin(yaw)});
  }
  return out;
}

double row_sum(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < t.cols(); ++c) s += t(r, c);
  return s;
}

}  // namespace

TEST_CASE("label_intentions") {
  const KinematicState cur{0, 0, 0, 8, 0};
  CHECK(label_intentions(cur, straight_future(8, 8, 0, 0, 50)) == IntentionLabels{Lateral::ST, Longitudinal::CON});
  const double deg30 = std::numbers::pi / 6;
  CHECK(label_intentions(cur, straight_future(8, 8, 0, deg30, 50)) == IntentionLabels{Lateral::LT, Longitudinal::CON});
  CHECK(label_intentions(cur, straight_future(8, 8, 0, -deg30, 50)).lateral == Lateral::RT);
  const KinematicState slow{0, 0, 0, 5, 0};
  CHECK(label_intentions(slow, straight_future(5, 9, 0, 0, 50)) == IntentionLabels{Lateral::ST, Longitudinal::ACC});
  CHECK(label_intentions(cur, straight_future(8, 3, 0, 0, 50)).longitudinal == Longitudinal::DEC);
  // Just inside the thresholds.
  CHECK(label_intentions(cur, straight_future(8, 8.99, 0, 0.25, 50)) == IntentionLabels{});
  CHECK_THROWS_AS(label_intentions(cur, std::vector<KinematicState>{}), ValidationError);

  // Heading across the +-pi seam still counts as a small left turn.
  const KinematicState west{0, 0, std::numbers::pi - 0.1, -8, 0};
  auto fut = straight_future(8, 8, std::numbers::pi - 0.1, std::numbers::pi + 0.3, 20);
  for (auto& s : fut) s.yaw = wrap_angle(s.yaw);
  CHECK(label_intentions(west, fut).lateral == Lateral::LT);
}

TEST_CASE("select_mode") {
  CHECK(select_mode(std::vector<double>{0.1, 0.7, 0.2}) == 1);
  CHECK(select_mode(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK_THROWS_AS(select_mode(std::vector<double>{}), ValidationError);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(6);
    for (auto& v : logits) v = rng.uniform(-3, 3);
    std::vector<double> scaled = logits;
    const double s = rng.uniform(0.1, 10);
    for (auto& v : scaled) v *= s;
    CHECK(select_mode(softmax(logits)) == select_mode(softmax(scaled)));
  }
}

TEST_CASE("intention heads and fusion") {
  IntentionConfig cfg{6, 3, 4};
  IntentionModule mod(8, cfg);
  Rng rng(12);
  mod.init(rng);
  ParamList ps;
  mod.collect(ps, "intention");

  Tensor x = testutil::random_tensor({4, 8}, rng);
  for (std::size_t c = 0; c < 8; ++c) x(3, c) = x(1, c);
  auto [la, lo] = mod.predict_intention(x);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(std::abs(row_sum(la, r) - 1) < 1e-9);
    CHECK(std::abs(row_sum(lo, r) - 1) < 1e-9);
  }
  for (std::size_t c = 0; c < 3; ++c) CHECK(la(1, c) == la(3, c));

  const Tensor z = mod.forward(x);
  for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(row_sum(z, r) - 1) < 1e-9);

  // Oracle composition: softmax(fuse(mix_la ++ mix_lo)).
  auto [e_la, e_lo] = mod.class_embeddings(x);
  Tensor mixed = Tensor::matrix(4, 6);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t cls = 0; cls < 3; ++cls)
      for (std::size_t j = 0; j < 3; ++j) {
        mixed(r, j) += la(r, cls) * e_la(r, cls * 3 + j);
        mixed(r, 3 + j) += lo(r, cls) * e_lo(r, cls * 3 + j);
      }
  Mlp fuse("fuse", {6, 6, 4});
  for (std::size_t l = 0; l < 2; ++l) {
    fuse.layers()[l].weight.value = find_param(ps, "intention.fuse." + std::to_string(l) + ".weight")->value;
    fuse.layers()[l].bias.value = find_param(ps, "intention.fuse." + std::to_string(l) + ".bias")->value;
  }
  CHECK(max_abs_diff(softmax(fuse.forward(mixed)), z) < 1e-12);

  CHECK_THROWS_AS(mod.fuse_intention(e_la, slice_cols(e_lo, 0, 6), la, lo), DimensionError);

  testutil::zero_params_with_prefix(ps, "intention.");
  auto [ula, ulo] = mod.predict_intention(x);
  const Tensor uz = mod.forward(x);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(ula(r, c) == doctest::Approx(1.0 / 3).epsilon(1e-15));
      CHECK(ulo(r, c) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
    for (std::size_t c = 0; c < 4; ++c) CHECK(uz(r, c) == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("decode_joint contracts") {
  TrajectoryModel model(testutil::tiny_model_config(6));
  model.init(3);
  const Scenario scn = to_ego_frame(generate_scenario(ScenarioTemplate::merge, 4, 8, testutil::short_horizon(3, 6)));
  const ModelOutput out = model.forward(scn);
  const JointPrediction& jp = out.joint;
  CHECK(jp.trajectories.shape() == std::vector<std::size_t>{3, 4, 6, 2});
  double s = 0.0;
  for (double p : jp.mode_probs) s += p;
  CHECK(std::abs(s - 1) < 1e-9);
  CHECK(jp.trajectories.all_finite());
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK((jp.position(0, i, 0) - scn.agents[i].states.back().position()).norm() < 1e-9);
  }

  // Zero decoder: constant-velocity extrapolation, uniform modes.
  TrajectoryModel cv = model;
  testutil::zero_params_with_prefix(cv.parameters(), "decoder.");
  const JointPrediction z = cv.forward(scn).joint;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(z.mode_probs[k] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    for (std::size_t i = 0; i < 4; ++i) {
      const Tensor base = constant_velocity_baseline(scn.agents[i], 6, scn.dt);
      for (std::size_t t = 1; t <= 6; ++t) {
        CHECK(std::abs(z.position(k, i, t).x - base(t - 1, 0)) < 1e-9);
        CHECK(std::abs(z.position(k, i, t).y - base(t - 1, 1)) < 1e-9);
      }
    }
  }
  // Without the prior a zero decoder stands still.
  ModelConfig still_cfg = testutil::tiny_model_config(6);
  still_cfg.decoder.velocity_prior = false;
  TrajectoryModel still(still_cfg);
  const JointPrediction zs = still.forward(scn).joint;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 1; t <= 6; ++t) CHECK(zs.position(0, i, t) == zs.origins[i]);

  // Permuting non-ego agents permutes trajectories; probabilities stay put.
  Scenario perm = scn;
  std::swap(perm.agents[1], perm.agents[3]);
  const JointPrediction jq = model.forward(perm).joint;
  const std::size_t map_to[] = {0, 3, 2, 1};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(jq.mode_probs[k] - jp.mode_probs[k]) < 1e-12);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t t = 1; t <= 6; ++t)
        CHECK((jq.position(k, map_to[i], t) - jp.position(k, i, t)).norm() < 1e-9);
  }
}

TEST_CASE("whole-model gradients match finite differences") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 4 && seed < 40; ++seed) {
    // The velocity prior is an additive constant; dropping it keeps positions
    // small so difference roundoff stays under the error floor.
    ModelConfig cfg = testutil::tiny_model_config();
    cfg.decoder.velocity_prior = false;
    TrajectoryModel model(cfg);
    model.init(seed);
    const ParamList ps = model.parameters();
    Rng rng(seed + 100);
    const Scenario scn = to_ego_frame(generate_scenario(
        seed % 2 ? ScenarioTemplate::crossing_conflict : ScenarioTemplate::left_turn, 3, seed, testutil::short_horizon()));
    {
      ModelCache probe_cache;
      model.forward(scn, &probe_cache);
      if (testutil::kink_margin(probe_cache) < 1e-3) continue;
    }
    ++checked;
    const Tensor wp = testutil::probe({3, 3, 4, 2}, rng, 1e-5);
    const Tensor wm = testutil::probe({3}, rng, 1e-5);
    const Tensor wl = testutil::probe({3, 3}, rng, 1e-5);
    const Tensor wo = testutil::probe({3, 3}, rng, 1e-5);
    auto loss = [&] {
      const ModelOutput o = model.forward(scn);
      return testutil::weighted_sum(o.joint.trajectories, wp) +
             testutil::weighted_sum(Tensor::row(o.joint.mode_probs), wm) + testutil::weighted_sum(o.lateral, wl) +
             testutil::weighted_sum(o.longitudinal, wo);
    };
    auto backward = [&] {
      ModelCache cache;
      model.forward(scn, &cache);
      ModelGrads g;
      g.positions = wp;
      g.mode_probs.assign(wm.values().begin(), wm.values().end());
      g.lateral_probs = wl;
      g.longitudinal_probs = wo;
      model.backward(cache, g);
    };
    const GradCheckResult r = grad_check(ps, loss, backward);
    INFO(r.worst_param, "[", r.worst_index, "] a=", r.analytic, " n=", r.numeric);
    CHECK(r.max_rel_error < 1e-5);

    // Risk-only gradients reach the trajectory head and nothing else.
    zero_grads(ps);
    ParamList head;
    for (const auto& np : ps)
      if (np.first.rfind("decoder.trajectory_head", 0) == 0) head.push_back(np);
    const GradCheckResult rr = grad_check(
        head, [&] { return testutil::weighted_sum(model.forward(scn).joint.trajectories, wp); },
        [&] {
          ModelCache cache;
          model.forward(scn, &cache);
          ModelGrads g;
          g.risk_positions = wp;
          model.backward(cache, g);
        });
    CHECK(rr.max_rel_error < 1e-5);
    for (const auto& [name, p] : ps) {
      if (name.rfind("decoder.trajectory_head", 0) == 0) continue;
      for (double v : p->grad.values()) CHECK(v == 0.0);
    }
  }
  CHECK(checked == 4);
}

TEST_CASE("prediction JSON round trip and world mapping") {
  TrajectoryModel model(testutil::tiny_model_config());
  model.init(9);
  const Scenario scn = generate_scenario(ScenarioTemplate::right_turn, 3, 5, testutil::short_horizon());
  const Prediction p = predict(model, scn);
  CHECK(p.scenario_id == scn.id);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((p.joint.origins[i] - scn.agents[i].states.back().position()).norm() < 1e-9);
  }
  const Prediction back = prediction_from_json(nlohmann::json::parse(prediction_to_json(p).dump()));
  CHECK(back.agent_ids == p.agent_ids);
  CHECK(back.joint.trajectories == p.joint.trajectories);
  CHECK(back.joint.mode_probs == p.joint.mode_probs);
  REQUIRE(back.intentions.size() == 3);
  CHECK(back.intentions[2].longitudinal == p.intentions[2].longitudinal);
  const std::string csv = prediction_to_csv(p);
  CHECK(csv.rfind("scenario_id,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3 * 4);

  Scenario wrong = scn;
  wrong.future_steps = 5;
  for (auto& a : wrong.agents) a.future.push_back(a.future.back());
  CHECK_THROWS_AS(predict(model, wrong), ValidationError);
}
