#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskcast/core/tensor.hpp"
#include "riskcast/model.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {

/// Mean Euclidean distance over steps 1..horizon of two [T, 2] tracks.
double ade(const Tensor& pred, const Tensor& truth, std::size_t horizon);
/// Euclidean distance at step `horizon`.
double fde(const Tensor& pred, const Tensor& truth, std::size_t horizon);

/// Ground-truth future of one agent as [T, 2].
Tensor future_track(const AgentHistory& a);
/// Mode k, agent i of a joint prediction as [T, 2].
Tensor mode_track(const JointPrediction& jp, std::size_t k, std::size_t i);

/// Extrapolates the last observed velocity (finite difference of the last two
/// positions) for `steps` steps; a single state holds its position.
Tensor constant_velocity_baseline(const AgentHistory& a, std::size_t steps, double dt);
/// Single-mode world-frame prediction for every agent.
Prediction constant_velocity_prediction(const Scenario& scn);

struct MetricRow {
  std::string model;
  std::string subset;
  std::string scope;  // "ego" or "all"
  double horizon_s = 0.0;
  std::size_t count = 0;
  double ade = 0.0;
  double fde = 0.0;
  double min_ade = 0.0;  // best mode
  double min_fde = 0.0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;

  /// Throws ValidationError when the row does not exist.
  const MetricRow& find(const std::string& model, const std::string& subset, const std::string& scope,
                        double horizon_s) const;
  void append(const MetricsReport& other);
};

inline constexpr double kHorizonsS[] = {1.0, 2.0, 3.0, 4.0, 5.0};

/// Subsets: all, normal, conflict (crossing_conflict template), LT/ST/RT by
/// the ego's ground-truth lateral label, and normal/conflict x LT/ST/RT.
/// Metrics use the select_mode mode; min_* use the best mode per scenario.
/// Empty subsets are omitted. Predictions must be world-frame and aligned
/// with `scenarios`.
MetricsReport evaluate_predictions(const std::string& model_name, const std::vector<Prediction>& predictions,
                                   const std::vector<Scenario>& scenarios);

MetricsReport evaluate(const TrajectoryModel& model, const std::vector<Scenario>& scenarios,
                       const std::string& model_name = "model");
MetricsReport evaluate_baseline(const std::vector<Scenario>& scenarios);

std::string metrics_to_csv(const MetricsReport& r);
nlohmann::json metrics_to_json(const MetricsReport& r);

}  // namespace riskcast
