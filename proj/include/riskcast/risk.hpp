#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskcast/core/tensor.hpp"
#include "riskcast/geometry.hpp"
#include "riskcast/intention.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {

/// Isotropic position uncertainty of one agent, sigma_t = sigma0 + growth * t.
struct UncertaintyModel {
  double sigma0 = 0.5;   // m
  double growth = 0.05;  // m per step

  double sigma(std::size_t t) const { return sigma0 + growth * static_cast<double>(t); }
};

struct HarmCoefficients {
  double mu0 = -6.0;
  double mu1 = 0.4;  // per m/s
  double mu_front = 0.2;
  double mu_side = 0.8;
  double mu_rear = 0.0;
  double protected_multiplier = 1.0;
  double unprotected_multiplier = 2.0;

  double area(ImpactRegion r) const;
  double multiplier(AgentClass c) const { return is_protected(c) ? protected_multiplier : unprotected_multiplier; }
};

struct RiskWeights {
  double safety = 33.3;
  double care = 33.3;
  double responsiveness = 33.3;
};

struct RiskConfig {
  UncertaintyModel uncertainty;
  HarmCoefficients harm;
  RiskWeights weights;
  double responsiveness_scale = 1.0;  // f(R) = s * R
  double probability_weight = 1.0;    // lambda_p in the ranking score
};

nlohmann::json risk_config_to_json(const RiskConfig& cfg);
/// Missing keys keep their defaults.
RiskConfig risk_config_from_json(const nlohmann::json& j);

/// P(|X| <= radius) for X ~ N(offset, sigma^2 I) in 2-D. When `grad` is given
/// it receives dP/d(offset).
double disc_probability(Vec2 offset, double sigma, double radius, Vec2* grad = nullptr);

/// Gradient of a pair's collision probability with respect to the two centers.
struct PairGradient {
  Vec2 i;
  Vec2 j;
};

/// Collision probability of two agents at step t. Each body point (front,
/// center, rear) of one agent is tested against a disc of radius
/// (width_i + width_j) / 2 around the other's center, with the relative
/// position std sqrt(2) * sigma_t. Both directions are averaged so the result
/// is symmetric, then clamped to [0, 1]. Orientations are held fixed in `grad`.
double collision_probability(const AgentState& i, const AgentState& j, std::size_t t, const UncertaintyModel& u,
                             PairGradient* grad = nullptr);

/// Speed change of A in a collision with B at angle theta.
double delta_v(double mass_a, double mass_b, double speed_a, double speed_b, double theta);

/// Logistic harm in (0, 1).
double harm(double dv, ImpactRegion region, const HarmCoefficients& c);

/// Harm suffered by `victim` when struck by `partner`, including the class
/// multiplier, clamped to 1.
double pair_harm(const AgentState& victim, const AgentState& partner, const HarmCoefficients& c);

struct RiskTrace {
  double risk = 0.0;
  std::size_t argmax = 0;  // index into probabilities
  std::vector<double> probabilities;
  std::vector<double> harms;
};

/// R = max_t H_t * P_t; the first maximiser wins ties.
RiskTrace trajectory_risk(std::span<const double> probabilities, std::span<const double> harms);

/// Risk to `other` from `ego`. Both sequences hold t = 0..T; steps 1..T are
/// scored and `argmax` indexes step argmax + 1.
RiskTrace trajectory_risk(std::span<const AgentState> ego, std::span<const AgentState> other,
                          const RiskConfig& cfg);

/// Distance from p to the closest road_boundary segment; infinity without
/// boundaries. `closest` receives the nearest point.
double boundary_distance(Vec2 p, std::span<const MapPolyline> map, Vec2* closest = nullptr);

/// Boundary risk: max_t H_b(t) * Phi(-(d_t - width/2) / sigma_t), with H_b the
/// harm of a frontal hit at a right angle against an immovable partner.
RiskTrace boundary_risk(std::span<const AgentState> ego, std::span<const MapPolyline> map, const RiskConfig& cfg);

double safety_cost(std::span<const double> risks, double boundary);
double care_cost(std::span<const double> risks);
double responsiveness_cost(std::span<const double> risks, double scale = 1.0);
double total_risk_cost(double c_s, double c_c, double c_r, const RiskWeights& w);

struct RiskReport {
  std::size_t k = 0;
  double p = 0.0;
  std::vector<std::string> agent_ids;  // non-ego agents, scene order
  std::vector<double> risks;
  std::vector<std::vector<double>> collision_probabilities;  // [agent][t - 1]
  double boundary = 0.0;
  double c_s = 0.0;
  double c_c = 0.0;
  double c_r = 0.0;
  double L_risk = 0.0;
  double score = 0.0;
  std::size_t rank = 0;
};

/// Per-step states of agent i in mode k for t = 0..T. Velocities are finite
/// differences; yaw follows the motion and holds when nearly stopped.
std::vector<AgentState> mode_states(const JointPrediction& jp, std::size_t k, std::size_t i, const Scenario& scn);

/// Risk report for one mode. `scn` supplies agent attributes, the ego index
/// and the map, in the same frame as `jp`. `grad`, when given, must have the
/// trajectory shape and receives dL_risk/d(positions) of this mode with
/// harms and orientations held fixed at the maximising steps.
RiskReport assess_mode(const JointPrediction& jp, std::size_t k, const Scenario& scn, const RiskConfig& cfg,
                       Tensor* grad = nullptr);

struct RiskRanking {
  std::vector<std::size_t> order;   // modes, best first
  std::vector<RiskReport> reports;  // indexed by mode
};

/// Scores every mode by L_risk - lambda_p * log p_k and sorts ascending.
RiskRanking rank_trajectories(const JointPrediction& jp, const Scenario& scn, const RiskConfig& cfg = {});

/// sum_k p_k * L_risk(k) with p treated as constant. `grad` receives the
/// position gradient, shaped like the trajectories.
double expected_risk(const JointPrediction& jp, const Scenario& scn, const RiskConfig& cfg, Tensor* grad = nullptr);

nlohmann::json risk_report_to_json(const RiskReport& r);
nlohmann::json risk_ranking_to_json(const std::string& scenario_id, const RiskRanking& r);

}  // namespace riskcast
