#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "riskcast/core/error.hpp"
#include "riskcast/core/functional.hpp"
#include "riskcast/core/param.hpp"
#include "riskcast/evaluation.hpp"
#include "riskcast/training.hpp"
#include "util.hpp"

using namespace riskcast;

namespace {

const ScenarioTemplate kAll[] = {ScenarioTemplate::straight, ScenarioTemplate::left_turn, ScenarioTemplate::right_turn,
                                 ScenarioTemplate::merge, ScenarioTemplate::crossing_conflict};

JointPrediction joint_from(const Tensor& truth, std::size_t modes) {
  JointPrediction jp;
  const std::size_t n = truth.dim(0), tt = truth.dim(1);
  jp.trajectories = Tensor({modes, n, tt, 2});
  for (std::size_t k = 0; k < modes; ++k)
    std::copy(truth.values().begin(), truth.values().end(),
              jp.trajectories.values().begin() + static_cast<std::ptrdiff_t>(k * n * tt * 2));
  jp.mode_probs.assign(modes, 1.0 / static_cast<double>(modes));
  jp.origins.assign(n, Vec2{});
  return jp;
}

Tensor one_hot_rows(std::span<const std::size_t> cls) {
  Tensor t = Tensor::matrix(cls.size(), 3);
  for (std::size_t i = 0; i < cls.size(); ++i) t(i, cls[i]) = 1.0;
  return t;
}

TrainConfig small_train(std::size_t epochs, std::size_t stage1) {
  TrainConfig c;
  c.epochs = epochs;
  c.stage1_epochs = stage1;
  c.batch_size = 2;
  c.lr = 1e-3;
  c.seed = 11;
  return c;
}

std::vector<Scenario> small_set(std::size_t count, std::uint64_t seed) {
  return generate_dataset(count, seed, kAll, 2, 3, testutil::short_horizon(3, 4));
}

}  // namespace

TEST_CASE("total_loss staging") {
  TrainConfig c;
  c.tau = 0.5;
  c.stage1_epochs = 5;
  CHECK(total_loss(1.0, 2.0, 100.0, 3, c) == 2.0);
  CHECK(total_loss(1.0, 2.0, 100.0, 5, c) == 2.0);
  CHECK(total_loss(1.0, 2.0, 100.0, 6, c) == 52.0);
  c.tau = 1.0 - 1e-12;
  CHECK(std::abs(total_loss(1.0, 2.0, 100.0, 6, c) - 3.0) < 1e-9);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    c.tau = rng.uniform(0.01, 0.99);
    const double pre = rng.uniform(0, 5), man = rng.uniform(0, 5), risk = rng.uniform(0, 5);
    CHECK(total_loss(pre, man, risk, 6, c) - total_loss(pre, man, risk, 5, c) ==
          doctest::Approx((1.0 - c.tau) * risk).epsilon(1e-12));
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  for (double tau : {0.0, 1.0, -0.5, 1.5}) {
    TrainConfig b = c;
    b.tau = tau;
    CHECK_THROWS_AS(validate(b), ValidationError);
  }
  TrainConfig b = c;
  b.stage1_epochs = c.epochs + 1;
  CHECK_THROWS_AS(validate(b), ValidationError);
  b = c;
  b.batch_size = 0;
  CHECK_THROWS_AS(validate(b), ValidationError);
  b = c;
  b.lr = 0.0;
  CHECK_THROWS_AS(validate(b), ValidationError);
  CHECK(train_config_to_json(c)["tau"] == 0.5);

  c.epochs = 7;
  c.lr = 3e-3;
  c.cosine_decay = false;
  c.risk.weights.care = 2.0;
  const TrainConfig back = train_config_from_json(train_config_to_json(c));
  CHECK(train_config_to_json(back) == train_config_to_json(c));
  CHECK(train_config_from_json({}).epochs == TrainConfig{}.epochs);
  CHECK_THROWS_AS(train_config_from_json({{"epochs", "ten"}}), ValidationError);
  CHECK_THROWS_AS(train_config_from_json({{"tau", 1.0}}), ValidationError);
}

TEST_CASE("intention_loss") {
  const std::vector<IntentionLabels> labels{{Lateral::LT, Longitudinal::DEC}, {Lateral::RT, Longitudinal::CON}};
  const std::size_t lat_cls[] = {0, 2}, lon_cls[] = {1, 2};
  CHECK(intention_loss(one_hot_rows(lat_cls), one_hot_rows(lon_cls), labels) == 0.0);

  const Tensor uniform = Tensor::matrix(2, 3, 1.0 / 3.0);
  CHECK(intention_loss(uniform, uniform, labels) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-14));

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const Tensor lat = softmax(testutil::random_tensor({n, 3}, rng, 3.0));
    const Tensor lon = softmax(testutil::random_tensor({n, 3}, rng, 3.0));
    std::vector<IntentionLabels> lab(n);
    double oracle = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lab[i] = {static_cast<Lateral>(rng.uniform_int(0, 2)), static_cast<Longitudinal>(rng.uniform_int(0, 2))};
      oracle += -std::log(lat(i, static_cast<std::size_t>(lab[i].lateral))) -
                std::log(lon(i, static_cast<std::size_t>(lab[i].longitudinal)));
    }
    Tensor g_lat, g_lon;
    CHECK(intention_loss(lat, lon, lab, &g_lat, &g_lon) == doctest::Approx(oracle / double(n)).epsilon(1e-12));

    const double h = 1e-7;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        Tensor up = lat, dn = lat;
        up(i, c) += h;
        dn(i, c) -= h;
        const double fd = (intention_loss(up, lon, lab) - intention_loss(dn, lon, lab)) / (2 * h);
        CHECK(std::abs(fd - g_lat(i, c)) < 1e-5 * std::max(1.0, std::abs(fd)));
      }
  }
  CHECK_THROWS_AS(intention_loss(uniform, Tensor::matrix(3, 3), labels), DimensionError);
}

TEST_CASE("prediction_loss") {
  Rng rng(9);
  const std::size_t n = 3, tt = 6;
  const Tensor truth = testutil::random_tensor({n, tt, 2}, rng, 30.0);

  JointPrediction exact = joint_from(truth, 1);
  CHECK(prediction_loss(exact, truth) == 0.0);

  JointPrediction off = exact;
  for (auto& v : off.trajectories.values()) v += 0.5;
  CHECK(prediction_loss(off, truth) == doctest::Approx(0.125 * n).epsilon(1e-14));

  SUBCASE("appending a worse mode does not change the loss") {
    JointPrediction two = joint_from(truth, 2);
    for (std::size_t i = 0; i < n * tt * 2; ++i) two.trajectories[i] += 0.5;
    for (std::size_t i = n * tt * 2; i < 2 * n * tt * 2; ++i) two.trajectories[i] += 3.0;
    std::size_t best = 9;
    CHECK(prediction_loss(two, truth, &best) == prediction_loss(off, truth));
    CHECK(best == 0);
  }

  SUBCASE("monotone non-increasing in the mode set") {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t kk = static_cast<std::size_t>(rng.uniform_int(1, 5));
      JointPrediction jp = joint_from(truth, kk + 1);
      for (auto& v : jp.trajectories.values()) v += rng.uniform(-4.0, 4.0);
      JointPrediction fewer = jp;
      fewer.trajectories = Tensor({kk, n, tt, 2}, std::vector<double>(jp.trajectories.values().begin(),
                                                                      jp.trajectories.values().end() -
                                                                          static_cast<std::ptrdiff_t>(n * tt * 2)));
      fewer.mode_probs.resize(kk);
      CHECK(prediction_loss(jp, truth) <= prediction_loss(fewer, truth));
    }
  }

  SUBCASE("gradient flows only into the winning mode") {
    JointPrediction jp = joint_from(truth, 3);
    for (auto& v : jp.trajectories.values()) v += rng.uniform(-2.0, 2.0);
    std::size_t best = 0;
    Tensor g;
    const double l0 = prediction_loss(jp, truth, &best, &g);
    const double h = 1e-6;
    for (std::size_t e = 0; e < jp.trajectories.size(); ++e) {
      JointPrediction up = jp, dn = jp;
      up.trajectories[e] += h;
      dn.trajectories[e] -= h;
      const double fd = (prediction_loss(up, truth) - prediction_loss(dn, truth)) / (2 * h);
      CHECK(std::abs(fd - g[e]) < 1e-6);
      if (e / (n * tt * 2) != best) CHECK(g[e] == 0.0);
    }
    CHECK(l0 > 0.0);
  }

  CHECK_THROWS_AS(prediction_loss(exact, Tensor({n, tt + 1, 2})), DimensionError);
}

TEST_CASE("truth tensor and labels") {
  const Scenario scn = generate_scenario(ScenarioTemplate::left_turn, 3, 2);
  const Tensor t = truth_tensor(scn);
  CHECK(t.shape() == std::vector<std::size_t>{3, scn.future_steps, 2});
  CHECK(t[(1 * scn.future_steps + 4) * 2 + 1] == scn.agents[1].future[4].y);
  CHECK(scene_labels(scn)[0].lateral == Lateral::LT);
  Scenario cut = scn;
  cut.agents[2].future.pop_back();
  CHECK_THROWS_AS(truth_tensor(cut), ValidationError);
}

TEST_CASE("scene_loss gradient matches finite differences") {
  TrajectoryModel model(testutil::tiny_model_config(4));
  model.init(3);
  const Scenario scn = to_ego_frame(generate_scenario(ScenarioTemplate::right_turn, 3, 6, testutil::short_horizon()));
  TrainConfig cfg = small_train(2, 1);
  cfg.mode_loss_weight = 0.7;
  auto objective = [&] {
    const LossTerms l = scene_loss(model, scn, 1, cfg, false);
    return l.total + cfg.mode_loss_weight * l.mode;
  };
  const ParamList params = model.parameters();
  zero_grads(params);
  const LossTerms l = scene_loss(model, scn, 1, cfg, true, 0.5);
  CHECK(l.total == doctest::Approx(l.pre + cfg.tau * l.man).epsilon(1e-15));

  Rng rng(4);
  const double h = 1e-6;
  int checked = 0;
  for (const auto& [name, p] : params) {
    for (int rep = 0; rep < 3; ++rep) {
      const auto e = static_cast<std::size_t>(rng.uniform_int(0, int(p->value.size()) - 1));
      const double keep = p->value[e];
      p->value[e] = keep + h;
      const double up = objective();
      p->value[e] = keep - h;
      const double dn = objective();
      p->value[e] = keep;
      const double fd = 0.5 * (up - dn) / (2 * h);
      INFO(name << "[" << e << "]");
      CHECK(std::abs(fd - p->grad[e]) < 1e-6 * std::max(1.0, std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked > 30);
}

TEST_CASE("risk gradient only reaches the model in stage 2") {
  TrajectoryModel model(testutil::tiny_model_config(4));
  model.init(8);
  const Scenario scn =
      to_ego_frame(generate_scenario(ScenarioTemplate::crossing_conflict, 3, 2, testutil::short_horizon()));
  TrainConfig base = small_train(2, 1);
  TrainConfig no_risk = base;
  no_risk.risk.weights = {0.0, 0.0, 0.0};
  const ParamList params = model.parameters();
  auto grads = [&](const TrainConfig& c, std::size_t epoch) {
    zero_grads(params);
    scene_loss(model, scn, epoch, c, true);
    std::vector<double> g;
    for (const auto& [name, p] : params) g.insert(g.end(), p->grad.values().begin(), p->grad.values().end());
    return g;
  };
  CHECK(grads(base, 1) == grads(no_risk, 1));
  CHECK(grads(no_risk, 2) == grads(no_risk, 1));
  const LossTerms l1 = scene_loss(model, scn, 1, base, false);
  const LossTerms l2 = scene_loss(model, scn, 2, base, false);
  CHECK(l1.risk == l2.risk);
  CHECK(l2.total - l1.total == doctest::Approx((1.0 - base.tau) * l1.risk).epsilon(1e-12));
}

TEST_CASE("split_dataset") {
  for (std::size_t n : {0u, 1u, 7u, 100u, 1001u}) {
    const DatasetSplit s = split_dataset(n, 4);
    CHECK(s.train.size() == n * 70 / 100);
    CHECK(s.val.size() == n * 15 / 100);
    CHECK(s.train.size() + s.val.size() + s.test.size() == n);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      CHECK(std::is_sorted(part->begin(), part->end()));
      all.insert(part->begin(), part->end());
    }
    CHECK(all.size() == n);
    CHECK(split_dataset(n, 4).test == s.test);
  }
  CHECK(split_dataset(100, 1).train != split_dataset(100, 2).train);
}

TEST_CASE("generate_dataset") {
  const auto a = small_set(12, 5);
  CHECK(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source_template == kAll[i % 5]);
    CHECK(a[i].agents.size() >= 2);
    CHECK(a[i].agents.size() <= 3);
  }
  const auto b = small_set(12, 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(scenario_to_json(a[i]) == scenario_to_json(b[i]));
  CHECK_THROWS_AS(generate_dataset(3, 1, {}, 2, 3), ValidationError);
  CHECK_THROWS_AS(generate_dataset(3, 1, kAll, 4, 3), ValidationError);
}

TEST_CASE("training is deterministic and writes its outputs") {
  const auto scenes = small_set(6, 1);
  const auto val = small_set(2, 2);
  const TrainConfig cfg = small_train(3, 2);
  const auto dir = std::filesystem::temp_directory_path() / "riskcast_train_test";
  std::filesystem::remove_all(dir);

  TrajectoryModel a(testutil::tiny_model_config(4));
  a.init(1);
  std::size_t calls = 0;
  TrainOutputs out{dir / "ckpt", dir / "log.csv", [&](const EpochStats&) { ++calls; }};
  const TrainReport ra = train(a, scenes, val, cfg, out);

  TrajectoryModel b(testutil::tiny_model_config(4));
  b.init(1);
  const TrainReport rb = train(b, scenes, val, cfg);

  CHECK(train_log_csv(ra) == train_log_csv(rb));
  CHECK(calls == 3);
  CHECK(ra.epochs.size() == 3);
  for (const auto& e : ra.epochs) {
    const double staged = e.pre + cfg.tau * e.man + (e.epoch > cfg.stage1_epochs ? (1.0 - cfg.tau) * e.risk : 0.0);
    CHECK(e.total == doctest::Approx(staged).epsilon(1e-12));
    CHECK(e.val_ade > 0.0);
  }
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::filesystem::exists(dir / "ckpt" / ("epoch_00" + std::to_string(i + 1) + ".ckpt")));
  std::ifstream log(dir / "log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,L_pre,L_man,L_risk,L,val_ADE,val_FDE,L_mode");

  const TrajectoryModel reloaded = TrajectoryModel::load(dir / "ckpt" / "epoch_003.ckpt");
  const Scenario probe = to_ego_frame(val[0]);
  CHECK(reloaded.forward(probe).joint.trajectories == a.forward(probe).joint.trajectories);
  std::filesystem::remove_all(dir);

  TrainConfig other = cfg;
  other.seed = 12;
  TrajectoryModel c(testutil::tiny_model_config(4));
  c.init(1);
  CHECK(train_log_csv(train(c, scenes, val, other)) != train_log_csv(ra));
}

TEST_CASE("stage 2 keeps parameters finite") {
  const auto scenes = small_set(5, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrajectoryModel m(testutil::tiny_model_config(4));
    m.init(seed);
    TrainConfig cfg = small_train(4, 1);
    cfg.seed = seed;
    const TrainReport r = train(m, scenes, {}, cfg);
    for (const auto& e : r.epochs) CHECK(std::isfinite(e.total));
    for (const auto& [name, p] : m.parameters())
      for (double v : p->value.values()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("training rejects unusable input") {
  TrajectoryModel m(testutil::tiny_model_config(4));
  m.init(0);
  const TrainConfig cfg = small_train(1, 1);
  CHECK_THROWS_AS(train(m, {}, {}, cfg), ValidationError);
  auto scenes = small_set(2, 1);
  CHECK_THROWS_AS(train(m, generate_dataset(1, 1, kAll, 2, 2), {}, cfg), ValidationError);
  scenes[1].agents[0].future.clear();
  CHECK_THROWS_AS(train(m, scenes, {}, cfg), ValidationError);

  // A non-finite input state surfaces as a loss failure naming the batch.
  auto bad = small_set(2, 1);
  bad[0].agents[1].future[2].x = std::numeric_limits<double>::quiet_NaN();
  try {
    train(m, bad, {}, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
  }
}
