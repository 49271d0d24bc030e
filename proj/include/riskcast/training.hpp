#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskcast/model.hpp"
#include "riskcast/risk.hpp"

namespace riskcast {

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 2e-4;
  double weight_decay = 3e-4;
  std::size_t epochs = 20;
  std::size_t stage1_epochs = 5;
  double tau = 0.5;
  double mode_loss_weight = 1.0;
  bool cosine_decay = true;  // lr decays from `lr` to 0 over all steps
  double grad_clip = 0.0;    // global-norm clip, 0 disables
  std::uint64_t seed = 0;
  RiskConfig risk;
};

/// Throws ValidationError unless 0 < tau < 1, 1 <= stage1_epochs <= epochs and
/// batch_size >= 1.
void validate(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; the result is validated.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Mean over agents of CE(lateral) + CE(longitudinal). Probability rows are
/// [N, 3]; the optional outputs receive dL/d(probs).
double intention_loss(const Tensor& lateral, const Tensor& longitudinal, std::span<const IntentionLabels> labels,
                      Tensor* grad_lateral = nullptr, Tensor* grad_longitudinal = nullptr);

/// min over k of sum_i smooth_l1(mode k agent i, truth i); truth is [N, T, 2].
/// `best` receives the winning mode and `grad` dL/d(trajectories).
double prediction_loss(const JointPrediction& jp, const Tensor& truth, std::size_t* best = nullptr,
                       Tensor* grad = nullptr);

/// Staged objective: L_pre + tau L_man, plus (1 - tau) L_risk after stage 1.
double total_loss(double l_pre, double l_man, double l_risk, std::size_t epoch, const TrainConfig& cfg);

/// Ground-truth futures of all agents as [N, T, 2].
Tensor truth_tensor(const Scenario& scn);
std::vector<IntentionLabels> scene_labels(const Scenario& scn);

struct LossTerms {
  double pre = 0.0;
  double man = 0.0;
  double risk = 0.0;
  double mode = 0.0;  // -log p of the winning mode
  double total = 0.0; // staged objective, excluding the mode term
};

/// Losses for one ego-frame scene with ground truth. With `accumulate`, the
/// gradient of (total + mode_loss_weight * mode) * grad_scale is added to the
/// model's parameter gradients; the risk term only reaches the trajectory
/// head and only in stage 2.
LossTerms scene_loss(TrajectoryModel& model, const Scenario& ego_scene, std::size_t epoch, const TrainConfig& cfg,
                     bool accumulate, double grad_scale = 1.0);

struct EpochStats {
  std::size_t epoch = 0;
  double pre = 0.0;
  double man = 0.0;
  double risk = 0.0;
  double total = 0.0;
  double mode = 0.0;
  double val_ade = 0.0;  // ego, selected mode, full horizon
  double val_fde = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// Header epoch,L_pre,L_man,L_risk,L,val_ADE,val_FDE,L_mode.
std::string train_log_csv(const TrainReport& r);

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint_dir;  // epoch_NNN.ckpt per epoch
  std::optional<std::filesystem::path> log_path;        // rewritten after every epoch
  std::function<void(const EpochStats&)> on_epoch;
};

/// Adam training over world-frame scenarios with futures. Batches are drawn
/// by a seeded shuffle per epoch; losses are averaged per epoch over the
/// training scenes. Throws NumericError naming epoch and batch on a
/// non-finite loss.
TrainReport train(TrajectoryModel& model, const std::vector<Scenario>& train_set, const std::vector<Scenario>& val_set,
                  const TrainConfig& cfg, const TrainOutputs& out = {});

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded 70/15/15 partition of n indices.
DatasetSplit split_dataset(std::size_t n, std::uint64_t seed);

/// `count` scenarios cycling through `templates`, each with a derived seed
/// and an agent count drawn from [min_agents, max_agents].
std::vector<Scenario> generate_dataset(std::size_t count, std::uint64_t seed,
                                       std::span<const ScenarioTemplate> templates, std::size_t min_agents = 2,
                                       std::size_t max_agents = 5, const GeneratorConfig& gen = {});

}  // namespace riskcast
