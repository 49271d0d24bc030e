#include "riskcast/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/non_central_chi_squared.hpp>

#include "riskcast/core/error.hpp"

namespace riskcast {

namespace {

// Beyond this many standard deviations the disc integral is treated as 0.
constexpr double kTailCutoff = 10.0;
// Below this speed the yaw of a decoded step is carried over.
constexpr double kYawSpeed = 0.1;

// F(x; k, lambda) of the noncentral chi-squared law for k = 2 and k = 4.
double chi2_cdf(double k, double lambda, double x) {
  if (lambda <= 0.0) {
    const double e = std::exp(-0.5 * x);
    return k == 2.0 ? -std::expm1(-0.5 * x) : 1.0 - e * (1.0 + 0.5 * x);
  }
  return boost::math::cdf(boost::math::non_central_chi_squared_distribution<double>(k, lambda), x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

void add_grad(Tensor& g, const JointPrediction& jp, std::size_t k, std::size_t i, std::size_t t, Vec2 v) {
  const std::size_t o = jp.offset(k, i, t);
  g[o] += v.x;
  g[o + 1] += v.y;
}

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

}  // namespace

double HarmCoefficients::area(ImpactRegion r) const {
  switch (r) {
    case ImpactRegion::front: return mu_front;
    case ImpactRegion::side: return mu_side;
    case ImpactRegion::rear: return mu_rear;
  }
  return 0.0;
}

nlohmann::json risk_config_to_json(const RiskConfig& c) {
  return {{"sigma0", c.uncertainty.sigma0},
          {"sigma_growth", c.uncertainty.growth},
          {"mu0", c.harm.mu0},
          {"mu1", c.harm.mu1},
          {"mu_front", c.harm.mu_front},
          {"mu_side", c.harm.mu_side},
          {"mu_rear", c.harm.mu_rear},
          {"protected_multiplier", c.harm.protected_multiplier},
          {"unprotected_multiplier", c.harm.unprotected_multiplier},
          {"omega_s", c.weights.safety},
          {"omega_c", c.weights.care},
          {"omega_r", c.weights.responsiveness},
          {"responsiveness_scale", c.responsiveness_scale},
          {"probability_weight", c.probability_weight}};
}

RiskConfig risk_config_from_json(const nlohmann::json& j) {
  RiskConfig c;
  auto get = [&](const char* key, double& v) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ValidationError(std::string("risk config: ") + key + " must be a number");
    v = j[key].get<double>();
  };
  get("sigma0", c.uncertainty.sigma0);
  get("sigma_growth", c.uncertainty.growth);
  get("mu0", c.harm.mu0);
  get("mu1", c.harm.mu1);
  get("mu_front", c.harm.mu_front);
  get("mu_side", c.harm.mu_side);
  get("mu_rear", c.harm.mu_rear);
  get("protected_multiplier", c.harm.protected_multiplier);
  get("unprotected_multiplier", c.harm.unprotected_multiplier);
  get("omega_s", c.weights.safety);
  get("omega_c", c.weights.care);
  get("omega_r", c.weights.responsiveness);
  get("responsiveness_scale", c.responsiveness_scale);
  get("probability_weight", c.probability_weight);
  if (!(c.uncertainty.sigma0 > 0.0) || c.uncertainty.growth < 0.0)
    throw ValidationError("risk config: sigma0 must be > 0 and sigma_growth >= 0");
  if (!(c.harm.mu1 > 0.0)) throw ValidationError("risk config: mu1 must be > 0");
  if (c.weights.safety < 0.0 || c.weights.care < 0.0 || c.weights.responsiveness < 0.0)
    throw ValidationError("risk config: cost weights must be >= 0");
  return c;
}

double disc_probability(Vec2 offset, double sigma, double radius, Vec2* grad) {
  if (grad) *grad = {};
  const double d = offset.norm();
  if (radius <= 0.0 || d - radius > kTailCutoff * sigma) return 0.0;
  // |X|^2 / sigma^2 is noncentral chi-squared with 2 dof.
  const double s2 = sigma * sigma;
  const double lambda = d * d / s2;
  const double x = radius * radius / s2;
  const double p = chi2_cdf(2.0, lambda, x);
  if (grad) {
    // dF/dlambda = (F(x; 4, lambda) - F(x; 2, lambda)) / 2
    const double dl = 0.5 * (chi2_cdf(4.0, lambda, x) - p);
    *grad = offset * (dl * 2.0 / s2);
  }
  return std::clamp(p, 0.0, 1.0);
}

double collision_probability(const AgentState& i, const AgentState& j, std::size_t t, const UncertaintyModel& u,
                             PairGradient* grad) {
  const double sigma = std::sqrt(2.0) * u.sigma(t);
  const double radius = 0.5 * (i.width + j.width);
  const BodyPoints bi = body_points(i);
  const BodyPoints bj = body_points(j);
  double sum = 0.0;
  Vec2 gi, gj;
  for (Vec2 b : {bi.front, bi.center, bi.rear}) {
    Vec2 g;
    sum += disc_probability(j.position - b, sigma, radius, &g);
    gj += g;
    gi += g * -1.0;
  }
  for (Vec2 b : {bj.front, bj.center, bj.rear}) {
    Vec2 g;
    sum += disc_probability(i.position - b, sigma, radius, &g);
    gi += g;
    gj += g * -1.0;
  }
  const double p = 0.5 * sum;
  if (grad) {
    if (p >= 1.0) {
      *grad = {};
    } else {
      *grad = {gi * 0.5, gj * 0.5};
    }
  }
  return std::clamp(p, 0.0, 1.0);
}

double delta_v(double mass_a, double mass_b, double speed_a, double speed_b, double theta) {
  const double rel2 = speed_a * speed_a + speed_b * speed_b - 2.0 * speed_a * speed_b * std::cos(theta);
  return mass_b / (mass_a + mass_b) * std::sqrt(std::max(0.0, rel2));
}

double harm(double dv, ImpactRegion region, const HarmCoefficients& c) {
  return 1.0 / (1.0 + std::exp(-(c.mu0 + c.mu1 * dv + c.area(region))));
}

double pair_harm(const AgentState& victim, const AgentState& partner, const HarmCoefficients& c) {
  const double dv = delta_v(victim.mass, partner.mass, victim.velocity.norm(), partner.velocity.norm(),
                            collision_angle(victim, partner));
  const double h = harm(dv, impact_region(victim, partner.position), c) * c.multiplier(victim.agent_class);
  return std::min(1.0, h);
}

RiskTrace trajectory_risk(std::span<const double> probabilities, std::span<const double> harms) {
  if (probabilities.size() != harms.size())
    throw DimensionError("trajectory_risk: " + std::to_string(probabilities.size()) + " probabilities vs " +
                         std::to_string(harms.size()) + " harms");
  RiskTrace r;
  r.probabilities.assign(probabilities.begin(), probabilities.end());
  r.harms.assign(harms.begin(), harms.end());
  for (std::size_t t = 0; t < probabilities.size(); ++t) {
    const double v = probabilities[t] * harms[t];
    if (v > r.risk) {
      r.risk = v;
      r.argmax = t;
    }
  }
  return r;
}

RiskTrace trajectory_risk(std::span<const AgentState> ego, std::span<const AgentState> other, const RiskConfig& cfg) {
  if (ego.size() != other.size() || ego.size() < 2)
    throw DimensionError("trajectory_risk: state sequences must share a length >= 2");
  std::vector<double> p(ego.size() - 1), h(ego.size() - 1);
  for (std::size_t t = 1; t < ego.size(); ++t) {
    p[t - 1] = collision_probability(ego[t], other[t], t, cfg.uncertainty);
    h[t - 1] = p[t - 1] > 0.0 ? pair_harm(other[t], ego[t], cfg.harm) : 0.0;
  }
  return trajectory_risk(p, h);
}

double boundary_distance(Vec2 p, std::span<const MapPolyline> map, Vec2* closest) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : map) {
    if (line.kind != MapKind::road_boundary) continue;
    const auto& w = line.waypoints;
    for (std::size_t s = 0; s < w.size(); ++s) {
      Vec2 q = w[s];
      if (s + 1 < w.size()) {
        const Vec2 seg = w[s + 1] - w[s];
        const double len2 = seg.dot(seg);
        if (len2 == 0.0) continue;
        const double a = std::clamp((p - w[s]).dot(seg) / len2, 0.0, 1.0);
        q = w[s] + seg * a;
      } else if (w.size() > 1) {
        continue;
      }
      const double d = (p - q).norm();
      if (d < best) {
        best = d;
        if (closest) *closest = q;
      }
    }
  }
  return best;
}

RiskTrace boundary_risk(std::span<const AgentState> ego, std::span<const MapPolyline> map, const RiskConfig& cfg) {
  if (ego.size() < 2) throw DimensionError("boundary_risk: need states for t = 0..T with T >= 1");
  std::vector<double> p(ego.size() - 1, 0.0), h(ego.size() - 1, 0.0);
  const HarmCoefficients& c = cfg.harm;
  for (std::size_t t = 1; t < ego.size(); ++t) {
    const double d = boundary_distance(ego[t].position, map);
    if (!std::isfinite(d)) continue;
    p[t - 1] = normal_cdf(-(d - 0.5 * ego[t].width) / cfg.uncertainty.sigma(t));
    // Immovable partner at a right angle: the ego absorbs its full speed.
    const double dv = delta_v(ego[t].mass, std::numeric_limits<double>::max(), ego[t].velocity.norm(), 0.0,
                              M_PI / 2);
    h[t - 1] = std::min(1.0, harm(dv, ImpactRegion::front, c) * c.multiplier(ego[t].agent_class));
  }
  return trajectory_risk(p, h);
}

double safety_cost(std::span<const double> risks, double boundary) {
  if (risks.empty()) return 0.5 * boundary;
  const double sum = std::accumulate(risks.begin(), risks.end(), 0.0);
  return (sum + boundary) / (2.0 * static_cast<double>(risks.size()));
}

double care_cost(std::span<const double> risks) {
  if (risks.empty()) return 0.0;
  double sum = 0.0;
  for (double a : risks)
    for (double b : risks) sum += std::abs(a - b);
  return sum / static_cast<double>(risks.size());
}

double responsiveness_cost(std::span<const double> risks, double scale) {
  double sum = 0.0;
  for (double r : risks) sum += scale * r;
  return sum;
}

double total_risk_cost(double c_s, double c_c, double c_r, const RiskWeights& w) {
  return w.safety * c_s + w.care * c_c + w.responsiveness * c_r;
}

std::vector<AgentState> mode_states(const JointPrediction& jp, std::size_t k, std::size_t i, const Scenario& scn) {
  const AgentHistory& a = scn.agents.at(i);
  std::vector<AgentState> out(jp.steps() + 1, a.current());
  out[0].position = jp.position(k, i, 0);
  for (std::size_t t = 1; t <= jp.steps(); ++t) {
    AgentState& s = out[t];
    s.position = jp.position(k, i, t);
    s.velocity = (s.position - out[t - 1].position) * (1.0 / scn.dt);
    const double v = s.velocity.norm();
    s.yaw = v > kYawSpeed ? std::atan2(s.velocity.y, s.velocity.x) : out[t - 1].yaw;
  }
  return out;
}

RiskReport assess_mode(const JointPrediction& jp, std::size_t k, const Scenario& scn, const RiskConfig& cfg,
                       Tensor* grad) {
  if (jp.agents() != scn.agents.size())
    throw DimensionError("risk: prediction has " + std::to_string(jp.agents()) + " agents, scene has " +
                         std::to_string(scn.agents.size()));
  if (k >= jp.modes()) throw DimensionError("risk: mode " + std::to_string(k) + " out of range");
  if (jp.steps() == 0) throw DimensionError("risk: horizon must be >= 1");
  if (grad && grad->shape() != jp.trajectories.shape())
    throw DimensionError("risk: gradient shape " + grad->shape_string() + " does not match trajectories " +
                         jp.trajectories.shape_string());

  const std::size_t ego = scn.ego_index;
  RiskReport rep;
  rep.k = k;
  rep.p = k < jp.mode_probs.size() ? jp.mode_probs[k] : 0.0;
  const std::vector<AgentState> ego_states = mode_states(jp, k, ego, scn);
  std::vector<std::size_t> others;
  std::vector<std::vector<AgentState>> other_states;
  std::vector<RiskTrace> traces;
  for (std::size_t i = 0; i < scn.agents.size(); ++i) {
    if (i == ego) continue;
    others.push_back(i);
    other_states.push_back(mode_states(jp, k, i, scn));
    traces.push_back(trajectory_risk(ego_states, other_states.back(), cfg));
    rep.agent_ids.push_back(scn.agents[i].id);
    rep.risks.push_back(traces.back().risk);
    rep.collision_probabilities.push_back(traces.back().probabilities);
  }
  const RiskTrace bnd = boundary_risk(ego_states, scn.map, cfg);
  rep.boundary = bnd.risk;
  rep.c_s = safety_cost(rep.risks, rep.boundary);
  rep.c_c = care_cost(rep.risks);
  rep.c_r = responsiveness_cost(rep.risks, cfg.responsiveness_scale);
  rep.L_risk = total_risk_cost(rep.c_s, rep.c_c, rep.c_r, cfg.weights);
  rep.score = rep.L_risk - cfg.probability_weight * std::log(rep.p);

  if (!grad) return rep;
  const double n = static_cast<double>(others.size());
  const RiskWeights& w = cfg.weights;
  for (std::size_t a = 0; a < others.size(); ++a) {
    const RiskTrace& tr = traces[a];
    if (tr.risk <= 0.0) continue;
    double signs = 0.0;
    for (double r : rep.risks) signs += sign(tr.risk - r);
    const double dl = w.safety / (2.0 * n) + w.care * 2.0 * signs / n + w.responsiveness * cfg.responsiveness_scale;
    const std::size_t t = tr.argmax + 1;
    PairGradient pg;
    collision_probability(ego_states[t], other_states[a][t], t, cfg.uncertainty, &pg);
    const double s = dl * tr.harms[tr.argmax];
    add_grad(*grad, jp, k, ego, t, pg.i * s);
    add_grad(*grad, jp, k, others[a], t, pg.j * s);
  }
  if (bnd.risk > 0.0) {
    const std::size_t t = bnd.argmax + 1;
    Vec2 q;
    const Vec2 p = ego_states[t].position;
    const double d = boundary_distance(p, scn.map, &q);
    if (d > 0.0) {
      const double sigma = cfg.uncertainty.sigma(t);
      const double z = -(d - 0.5 * ego_states[t].width) / sigma;
      const double dl = others.empty() ? 0.5 * w.safety : w.safety / (2.0 * n);
      const double s = dl * bnd.harms[bnd.argmax] * normal_pdf(z) * (-1.0 / sigma) / d;
      add_grad(*grad, jp, k, ego, t, (p - q) * s);
    }
  }
  return rep;
}

RiskRanking rank_trajectories(const JointPrediction& jp, const Scenario& scn, const RiskConfig& cfg) {
  if (jp.modes() == 0) throw DimensionError("rank_trajectories: no modes");
  RiskRanking out;
  for (std::size_t k = 0; k < jp.modes(); ++k) out.reports.push_back(assess_mode(jp, k, scn, cfg));
  out.order.resize(jp.modes());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return out.reports[a].score < out.reports[b].score; });
  for (std::size_t r = 0; r < out.order.size(); ++r) out.reports[out.order[r]].rank = r;
  return out;
}

double expected_risk(const JointPrediction& jp, const Scenario& scn, const RiskConfig& cfg, Tensor* grad) {
  double total = 0.0;
  Tensor g;
  if (grad) {
    if (grad->shape() != jp.trajectories.shape()) *grad = Tensor(jp.trajectories.shape());
    g = Tensor(jp.trajectories.shape());
  }
  for (std::size_t k = 0; k < jp.modes(); ++k) {
    const double p = jp.mode_probs.at(k);
    if (grad) g.fill(0.0);
    total += p * assess_mode(jp, k, scn, cfg, grad ? &g : nullptr).L_risk;
    if (grad) {
      g *= p;
      *grad += g;
    }
  }
  return total;
}

nlohmann::json risk_report_to_json(const RiskReport& r) {
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t a = 0; a < r.agent_ids.size(); ++a)
    agents.push_back({{"id", r.agent_ids[a]}, {"R", r.risks[a]}, {"P", r.collision_probabilities[a]}});
  return {{"k", r.k},     {"p", r.p},         {"R", r.risks},     {"R_b", r.boundary},
          {"c_s", r.c_s}, {"c_c", r.c_c},     {"c_r", r.c_r},     {"L_risk", r.L_risk},
          {"score", r.score}, {"rank", r.rank}, {"agents", agents}};
}

nlohmann::json risk_ranking_to_json(const std::string& scenario_id, const RiskRanking& r) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& rep : r.reports) modes.push_back(risk_report_to_json(rep));
  return {{"scenario_id", scenario_id}, {"order", r.order}, {"modes", modes}};
}

}  // namespace riskcast
