#include "riskcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "riskcast/core/error.hpp"
#include "riskcast/intention.hpp"

namespace riskcast {

namespace {

void check_tracks(const Tensor& pred, const Tensor& truth, std::size_t horizon, const char* what) {
  require_same_shape(pred, truth, what);
  if (pred.rank() != 2 || pred.cols() != 2) throw DimensionError(std::string(what) + ": tracks must be [T, 2]");
  if (horizon == 0) throw ValidationError(std::string(what) + ": horizon must be >= 1");
  if (horizon > pred.rows())
    throw ValidationError(std::string(what) + ": horizon " + std::to_string(horizon) + " exceeds T = " +
                          std::to_string(pred.rows()));
}

double dist(const Tensor& a, const Tensor& b, std::size_t r) { return std::hypot(a(r, 0) - b(r, 0), a(r, 1) - b(r, 1)); }

// Per-scenario metrics at one horizon.
struct SceneMetrics {
  double ade = 0.0, fde = 0.0, min_ade = 0.0, min_fde = 0.0;
};

struct Accumulator {
  std::size_t count = 0;
  SceneMetrics sum;
  void add(const SceneMetrics& m) {
    ++count;
    sum.ade += m.ade;
    sum.fde += m.fde;
    sum.min_ade += m.min_ade;
    sum.min_fde += m.min_fde;
  }
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

}  // namespace

double ade(const Tensor& pred, const Tensor& truth, std::size_t horizon) {
  check_tracks(pred, truth, horizon, "ade");
  double sum = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) sum += dist(pred, truth, t);
  return sum / static_cast<double>(horizon);
}

double fde(const Tensor& pred, const Tensor& truth, std::size_t horizon) {
  check_tracks(pred, truth, horizon, "fde");
  return dist(pred, truth, horizon - 1);
}

Tensor future_track(const AgentHistory& a) {
  if (a.future.empty()) throw ValidationError("agent '" + a.id + "' has no ground-truth future");
  Tensor out = Tensor::matrix(a.future.size(), 2);
  for (std::size_t t = 0; t < a.future.size(); ++t) {
    out(t, 0) = a.future[t].x;
    out(t, 1) = a.future[t].y;
  }
  return out;
}

Tensor mode_track(const JointPrediction& jp, std::size_t k, std::size_t i) {
  Tensor out = Tensor::matrix(jp.steps(), 2);
  for (std::size_t t = 1; t <= jp.steps(); ++t) {
    const std::size_t o = jp.offset(k, i, t);
    out(t - 1, 0) = jp.trajectories[o];
    out(t - 1, 1) = jp.trajectories[o + 1];
  }
  return out;
}

Tensor constant_velocity_baseline(const AgentHistory& a, std::size_t steps, double dt) {
  if (a.states.empty()) throw ValidationError("agent '" + a.id + "' has no history");
  const Vec2 p = a.states.back().position();
  Vec2 v;
  if (a.states.size() >= 2) v = (p - a.states[a.states.size() - 2].position()) * (1.0 / dt);
  Tensor out = Tensor::matrix(steps, 2);
  for (std::size_t t = 1; t <= steps; ++t) {
    const Vec2 q = p + v * (dt * static_cast<double>(t));
    out(t - 1, 0) = q.x;
    out(t - 1, 1) = q.y;
  }
  return out;
}

Prediction constant_velocity_prediction(const Scenario& scn) {
  Prediction p;
  p.scenario_id = scn.id;
  const std::size_t n = scn.agents.size(), tt = scn.future_steps;
  p.joint.trajectories = Tensor({1, n, tt, 2});
  p.joint.mode_probs = {1.0};
  for (std::size_t i = 0; i < n; ++i) {
    const AgentHistory& a = scn.agents[i];
    p.agent_ids.push_back(a.id);
    p.joint.origins.push_back(a.states.back().position());
    const Tensor track = constant_velocity_baseline(a, tt, scn.dt);
    std::copy(track.values().begin(), track.values().end(),
              p.joint.trajectories.values().begin() + static_cast<std::ptrdiff_t>(p.joint.offset(0, i, 1)));
    p.intentions.emplace_back();
  }
  return p;
}

const MetricRow& MetricsReport::find(const std::string& model, const std::string& subset, const std::string& scope,
                                     double horizon_s) const {
  for (const auto& r : rows)
    if (r.model == model && r.subset == subset && r.scope == scope && std::abs(r.horizon_s - horizon_s) < 1e-9)
      return r;
  throw ValidationError("metrics: no row for " + model + "/" + subset + "/" + scope + "@" + fixed(horizon_s, 1) + "s");
}

void MetricsReport::append(const MetricsReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

MetricsReport evaluate_predictions(const std::string& model_name, const std::vector<Prediction>& predictions,
                                   const std::vector<Scenario>& scenarios) {
  if (predictions.size() != scenarios.size())
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(scenarios.size()) + " scenarios");

  const std::vector<std::string> scopes{"ego", "all"};
  // (subset, scope, horizon index) -> running sums; std::map keeps output order stable.
  std::map<std::tuple<int, int, std::size_t>, Accumulator> acc;
  const std::vector<std::string> subset_names{"all",         "normal",      "conflict",   "LT",
                                              "ST",          "RT",          "normal/LT",  "normal/ST",
                                              "normal/RT",   "conflict/LT", "conflict/ST", "conflict/RT"};
  auto subset_index = [&](const std::string& s) {
    return static_cast<int>(std::find(subset_names.begin(), subset_names.end(), s) - subset_names.begin());
  };

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const Scenario& scn = scenarios[s];
    const Prediction& pred = predictions[s];
    const JointPrediction& jp = pred.joint;
    if (!scn.has_futures()) throw ValidationError("scenario '" + scn.id + "' has no ground-truth futures");
    if (jp.steps() != scn.future_steps)
      throw DimensionError("scenario '" + scn.id + "': prediction has " + std::to_string(jp.steps()) +
                           " steps, truth has " + std::to_string(scn.future_steps));
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < pred.agent_ids.size(); ++i) slot[pred.agent_ids[i]] = i;
    std::vector<std::size_t> pred_index;
    std::vector<Tensor> truth;
    for (const auto& a : scn.agents) {
      const auto it = slot.find(a.id);
      if (it == slot.end())
        throw ValidationError("scenario '" + scn.id + "': prediction has no agent '" + a.id + "'");
      pred_index.push_back(it->second);
      truth.push_back(future_track(a));
    }
    const std::size_t kk = jp.modes(), n = scn.agents.size();
    const std::size_t sel = select_mode(jp);
    std::vector<std::vector<Tensor>> tracks(kk);
    for (std::size_t k = 0; k < kk; ++k)
      for (std::size_t i = 0; i < n; ++i) tracks[k].push_back(mode_track(jp, k, pred_index[i]));

    const bool conflict = scn.source_template == ScenarioTemplate::crossing_conflict;
    const std::string lateral{to_string(label_intentions(scn.ego()).lateral)};
    const std::string group = conflict ? "conflict" : "normal";
    const int subsets[] = {subset_index("all"), subset_index(group), subset_index(lateral),
                           subset_index(group + "/" + lateral)};

    for (std::size_t h = 0; h < std::size(kHorizonsS); ++h) {
      const auto steps = static_cast<std::size_t>(std::llround(kHorizonsS[h] / scn.dt));
      if (steps == 0 || steps > scn.future_steps) continue;
      for (int scope = 0; scope < 2; ++scope) {
        SceneMetrics m;
        m.min_ade = m.min_fde = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kk; ++k) {
          double a = 0.0, f = 0.0;
          if (scope == 0) {
            a = ade(tracks[k][scn.ego_index], truth[scn.ego_index], steps);
            f = fde(tracks[k][scn.ego_index], truth[scn.ego_index], steps);
          } else {
            for (std::size_t i = 0; i < n; ++i) {
              a += ade(tracks[k][i], truth[i], steps);
              f += fde(tracks[k][i], truth[i], steps);
            }
            a /= static_cast<double>(n);
            f /= static_cast<double>(n);
          }
          if (k == sel) m.ade = a, m.fde = f;
          m.min_ade = std::min(m.min_ade, a);
          m.min_fde = std::min(m.min_fde, f);
        }
        for (int sub : subsets) acc[{sub, scope, h}].add(m);
      }
    }
  }

  MetricsReport out;
  for (const auto& [key, a] : acc) {
    const auto [sub, scope, h] = key;
    const double c = static_cast<double>(a.count);
    out.rows.push_back({model_name, subset_names[static_cast<std::size_t>(sub)], scopes[static_cast<std::size_t>(scope)],
                        kHorizonsS[h], a.count, a.sum.ade / c, a.sum.fde / c, a.sum.min_ade / c, a.sum.min_fde / c});
  }
  return out;
}

MetricsReport evaluate(const TrajectoryModel& model, const std::vector<Scenario>& scenarios,
                       const std::string& model_name) {
  std::vector<Prediction> preds;
  preds.reserve(scenarios.size());
  for (const auto& s : scenarios) preds.push_back(predict(model, s));
  return evaluate_predictions(model_name, preds, scenarios);
}

MetricsReport evaluate_baseline(const std::vector<Scenario>& scenarios) {
  std::vector<Prediction> preds;
  preds.reserve(scenarios.size());
  for (const auto& s : scenarios) preds.push_back(constant_velocity_prediction(s));
  return evaluate_predictions("constant_velocity", preds, scenarios);
}

std::string metrics_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "model,subset,scope,horizon_s,count,ade,fde,min_ade,min_fde\n";
  for (const auto& row : r.rows) {
    out << row.model << ',' << row.subset << ',' << row.scope << ',' << fixed(row.horizon_s, 1) << ',' << row.count
        << ',' << row.ade << ',' << row.fde << ',' << row.min_ade << ',' << row.min_fde << '\n';
  }
  return out.str();
}

nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model", row.model},
                    {"subset", row.subset},
                    {"scope", row.scope},
                    {"horizon_s", row.horizon_s},
                    {"count", row.count},
                    {"ade", row.ade},
                    {"fde", row.fde},
                    {"min_ade", row.min_ade},
                    {"min_fde", row.min_fde}});
  }
  return {{"rows", rows}};
}

}  // namespace riskcast
