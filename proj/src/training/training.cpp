#include "riskcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "riskcast/core/error.hpp"
#include "riskcast/core/functional.hpp"
#include "riskcast/core/optim.hpp"
#include "riskcast/evaluation.hpp"

namespace riskcast {

namespace {

// dCE/dp for the target entry, zero where the probability floor applies.
double ce_grad(double p) { return p > kProbabilityFloor ? -1.0 / p : 0.0; }

std::string epoch_name(std::size_t epoch) {
  std::string s = std::to_string(epoch);
  return "epoch_" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s + ".ckpt";
}

void clip_grad_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (const auto& [name, p] : params) p->grad *= s;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.tau > 0.0 && cfg.tau < 1.0)) throw ValidationError("train: tau must be in (0, 1)");
  if (cfg.epochs == 0) throw ValidationError("train: epochs must be >= 1");
  if (cfg.stage1_epochs > cfg.epochs) throw ValidationError("train: stage1_epochs must not exceed epochs");
  if (cfg.batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ValidationError("train: lr must be > 0");
  if (cfg.weight_decay < 0.0) throw ValidationError("train: weight_decay must be >= 0");
  if (cfg.mode_loss_weight < 0.0) throw ValidationError("train: mode_loss_weight must be >= 0");
  if (cfg.grad_clip < 0.0) throw ValidationError("train: grad_clip must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size}, {"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay}, {"epochs", cfg.epochs},
          {"stage1_epochs", cfg.stage1_epochs}, {"tau", cfg.tau},
          {"mode_loss_weight", cfg.mode_loss_weight}, {"cosine_decay", cfg.cosine_decay},
          {"grad_clip", cfg.grad_clip}, {"seed", cfg.seed},
          {"risk", risk_config_to_json(cfg.risk)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("epochs", c.epochs);
    get("stage1_epochs", c.stage1_epochs);
    get("tau", c.tau);
    get("mode_loss_weight", c.mode_loss_weight);
    get("cosine_decay", c.cosine_decay);
    get("grad_clip", c.grad_clip);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  if (j.contains("risk")) c.risk = risk_config_from_json(j.at("risk"));
  validate(c);
  return c;
}

double intention_loss(const Tensor& lateral, const Tensor& longitudinal, std::span<const IntentionLabels> labels,
                      Tensor* grad_lateral, Tensor* grad_longitudinal) {
  const std::size_t n = labels.size();
  if (lateral.rank() != 2 || lateral.rows() != n || lateral.cols() != 3 || !lateral.same_shape(longitudinal))
    throw DimensionError("intention_loss: expected [" + std::to_string(n) + ", 3] probabilities, got " +
                         lateral.shape_string() + " and " + longitudinal.shape_string());
  if (grad_lateral) *grad_lateral = Tensor::matrix(n, 3);
  if (grad_longitudinal) *grad_longitudinal = Tensor::matrix(n, 3);
  if (n == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto la = static_cast<std::size_t>(labels[i].lateral);
    const auto lo = static_cast<std::size_t>(labels[i].longitudinal);
    sum += cross_entropy(lateral.row_span(i), la) + cross_entropy(longitudinal.row_span(i), lo);
    if (grad_lateral) (*grad_lateral)(i, la) = inv * ce_grad(lateral(i, la));
    if (grad_longitudinal) (*grad_longitudinal)(i, lo) = inv * ce_grad(longitudinal(i, lo));
  }
  return sum * inv;
}

double prediction_loss(const JointPrediction& jp, const Tensor& truth, std::size_t* best, Tensor* grad) {
  const std::size_t kk = jp.modes(), n = jp.agents(), tt = jp.steps();
  if (truth.shape() != std::vector<std::size_t>{n, tt, 2})
    throw DimensionError("prediction_loss: truth " + truth.shape_string() + " does not match [" + std::to_string(n) +
                         ", " + std::to_string(tt) + ", 2]");
  if (kk == 0) throw DimensionError("prediction_loss: no modes");
  const std::size_t block = tt * 2;
  auto agent_slice = [&](const Tensor& src, std::size_t start) {
    return Tensor({tt, 2}, std::vector<double>(src.values().begin() + static_cast<std::ptrdiff_t>(start),
                                               src.values().begin() + static_cast<std::ptrdiff_t>(start + block)));
  };
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < kk; ++k) {
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      l += smooth_l1(agent_slice(jp.trajectories, jp.offset(k, i, 1)), agent_slice(truth, i * block));
    if (l < best_loss) {
      best_loss = l;
      best_k = k;
    }
  }
  if (best) *best = best_k;
  if (grad) {
    *grad = Tensor(jp.trajectories.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor g = smooth_l1_grad(agent_slice(jp.trajectories, jp.offset(best_k, i, 1)), agent_slice(truth, i * block));
      std::copy(g.values().begin(), g.values().end(),
                grad->values().begin() + static_cast<std::ptrdiff_t>(jp.offset(best_k, i, 1)));
    }
  }
  return best_loss;
}

double total_loss(double l_pre, double l_man, double l_risk, std::size_t epoch, const TrainConfig& cfg) {
  const double l = l_pre + cfg.tau * l_man;
  return epoch <= cfg.stage1_epochs ? l : l + (1.0 - cfg.tau) * l_risk;
}

Tensor truth_tensor(const Scenario& scn) {
  const std::size_t n = scn.agents.size(), tt = scn.future_steps;
  Tensor out({n, tt, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = scn.agents[i].future;
    if (f.size() != tt)
      throw ValidationError("scenario '" + scn.id + "': agent '" + scn.agents[i].id + "' has " +
                            std::to_string(f.size()) + " future states, expected " + std::to_string(tt));
    for (std::size_t t = 0; t < tt; ++t) {
      out[(i * tt + t) * 2] = f[t].x;
      out[(i * tt + t) * 2 + 1] = f[t].y;
    }
  }
  return out;
}

std::vector<IntentionLabels> scene_labels(const Scenario& scn) {
  std::vector<IntentionLabels> out;
  out.reserve(scn.agents.size());
  for (const auto& a : scn.agents) out.push_back(label_intentions(a));
  return out;
}

LossTerms scene_loss(TrajectoryModel& model, const Scenario& ego_scene, std::size_t epoch, const TrainConfig& cfg,
                     bool accumulate, double grad_scale) {
  ModelCache cache;
  const ModelOutput out = model.forward(ego_scene, accumulate ? &cache : nullptr);
  const JointPrediction& jp = out.joint;
  const bool stage2 = epoch > cfg.stage1_epochs;

  LossTerms l;
  std::size_t best = 0;
  Tensor g_pos, g_lat, g_lon, g_risk;
  l.pre = prediction_loss(jp, truth_tensor(ego_scene), &best, accumulate ? &g_pos : nullptr);
  const std::vector<IntentionLabels> labels = scene_labels(ego_scene);
  l.man = intention_loss(out.lateral, out.longitudinal, labels, accumulate ? &g_lat : nullptr,
                         accumulate ? &g_lon : nullptr);
  l.mode = cross_entropy(jp.mode_probs, best);
  l.risk = expected_risk(jp, ego_scene, cfg.risk, accumulate && stage2 ? &g_risk : nullptr);
  l.total = total_loss(l.pre, l.man, l.risk, epoch, cfg);
  if (!accumulate) return l;

  ModelGrads grads;
  g_pos *= grad_scale;
  grads.positions = std::move(g_pos);
  grads.mode_probs.assign(jp.modes(), 0.0);
  grads.mode_probs[best] = grad_scale * cfg.mode_loss_weight * ce_grad(jp.mode_probs[best]);
  g_lat *= grad_scale * cfg.tau;
  g_lon *= grad_scale * cfg.tau;
  grads.lateral_probs = std::move(g_lat);
  grads.longitudinal_probs = std::move(g_lon);
  if (stage2) {
    g_risk *= grad_scale * (1.0 - cfg.tau);
    grads.risk_positions = std::move(g_risk);
  }
  model.backward(cache, grads);
  return l;
}

std::string train_log_csv(const TrainReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,L_pre,L_man,L_risk,L,val_ADE,val_FDE,L_mode\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << e.pre << ',' << e.man << ',' << e.risk << ',' << e.total << ',' << e.val_ade << ','
        << e.val_fde << ',' << e.mode << '\n';
  return out.str();
}

TrainReport train(TrajectoryModel& model, const std::vector<Scenario>& train_set, const std::vector<Scenario>& val_set,
                  const TrainConfig& cfg, const TrainOutputs& out) {
  validate(cfg);
  if (train_set.empty()) throw ValidationError("train: empty training set");
  std::vector<Scenario> scenes, val;
  for (const auto* src : {&train_set, &val_set}) {
    auto& dst = src == &train_set ? scenes : val;
    for (const auto& s : *src) {
      if (!s.has_futures()) throw ValidationError("train: scenario '" + s.id + "' has no ground-truth futures");
      if (s.future_steps != model.config().decoder.future_steps)
        throw ValidationError("train: scenario '" + s.id + "' has T = " + std::to_string(s.future_steps) +
                              ", model predicts " + std::to_string(model.config().decoder.future_steps));
      dst.push_back(to_ego_frame(s));
    }
  }
  if (out.checkpoint_dir) std::filesystem::create_directories(*out.checkpoint_dir);

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;
  const ParamList params = model.parameters();
  Adam opt(acfg, params);
  TrainReport report;
  std::vector<std::size_t> order(scenes.size());
  const std::size_t per_epoch = (scenes.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(per_epoch * cfg.epochs);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());

    EpochStats st;
    st.epoch = epoch;
    for (std::size_t b = 0, batch = 0; b < order.size(); b += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - b);
      opt.zero_grad();
      for (std::size_t j = b; j < end; ++j) {
        const LossTerms l = scene_loss(model, scenes[order[j]], epoch, cfg, true, scale);
        if (!std::isfinite(l.total) || !std::isfinite(l.mode))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + " (scenario '" + scenes[order[j]].id + "')");
        st.pre += l.pre;
        st.man += l.man;
        st.risk += l.risk;
        st.total += l.total;
        st.mode += l.mode;
      }
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      if (cfg.cosine_decay)
        opt.set_lr(0.5 * cfg.lr * (1.0 + std::cos(M_PI * static_cast<double>(opt.step_count()) / total_steps)));
      opt.step();
    }
    const double inv = 1.0 / static_cast<double>(scenes.size());
    st.pre *= inv;
    st.man *= inv;
    st.risk *= inv;
    st.total *= inv;
    st.mode *= inv;

    if (!val.empty()) {
      for (const auto& s : val) {
        const JointPrediction jp = model.forward(s).joint;
        const std::size_t k = select_mode(jp);
        const Tensor truth = future_track(s.ego());
        const Tensor pred = mode_track(jp, k, s.ego_index);
        st.val_ade += ade(pred, truth, s.future_steps);
        st.val_fde += fde(pred, truth, s.future_steps);
      }
      st.val_ade /= static_cast<double>(val.size());
      st.val_fde /= static_cast<double>(val.size());
    }
    report.epochs.push_back(st);

    if (out.checkpoint_dir)
      model.save(*out.checkpoint_dir / epoch_name(epoch), {{"epoch", epoch}, {"train", train_config_to_json(cfg)}});
    if (out.log_path) {
      std::ofstream f(*out.log_path);
      if (!f) throw ValidationError("cannot write " + out.log_path->string());
      f << train_log_csv(report);
    }
    if (out.on_epoch) out.on_epoch(st);
  }
  return report;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_val = n * 15 / 100;
  DatasetSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<Scenario> generate_dataset(std::size_t count, std::uint64_t seed,
                                       std::span<const ScenarioTemplate> templates, std::size_t min_agents,
                                       std::size_t max_agents, const GeneratorConfig& gen) {
  if (templates.empty()) throw ValidationError("generate_dataset: no templates");
  if (min_agents == 0 || min_agents > max_agents) throw ValidationError("generate_dataset: bad agent range");
  std::vector<Scenario> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    Rng rng(s);
    const auto n = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(min_agents), static_cast<int>(max_agents)));
    out.push_back(generate_scenario(templates[i % templates.size()], n, s, gen));
  }
  return out;
}

}  // namespace riskcast
