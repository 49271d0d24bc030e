#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskcast/interaction.hpp"
#include "riskcast/intention.hpp"

namespace riskcast {

struct ModelConfig {
  InteractionConfig interaction;
  IntentionConfig intention;
  DecoderConfig decoder;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Network outputs in the ego frame of the scene that was fed in.
struct ModelOutput {
  JointPrediction joint;
  Tensor lateral;       // [N, 3]
  Tensor longitudinal;  // [N, 3]
};

struct ModelCache {
  SceneInputs inputs;
  InteractionCache interaction;
  Tensor features;  // I
  IntentionCache intention;
  DecoderCache decoder;
};

/// Upstream gradients for one forward pass. Empty members contribute nothing.
/// `risk_positions` reaches the trajectory head only.
struct ModelGrads {
  Tensor positions;                 // [K, N, T, 2]
  std::vector<double> mode_probs;   // K
  Tensor lateral_probs;             // [N, 3]
  Tensor longitudinal_probs;        // [N, 3]
  Tensor risk_positions;            // [K, N, T, 2]
};

class TrajectoryModel {
 public:
  explicit TrajectoryModel(const ModelConfig& cfg = {});

  void init(std::uint64_t seed);
  /// Every learnable tensor, with stable dotted names.
  ParamList parameters();

  /// `scene` must already be in the ego frame (see to_ego_frame).
  ModelOutput forward(const Scenario& scene, ModelCache* cache = nullptr) const;
  void backward(const ModelCache& cache, const ModelGrads& grads);

  const ModelConfig& config() const { return cfg_; }
  InteractionEncoder& interaction() { return interaction_; }
  IntentionModule& intention() { return intention_; }
  JointDecoder& decoder() { return decoder_; }

  void save(const std::filesystem::path& path, const nlohmann::json& extra_meta = {});
  static TrajectoryModel load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  InteractionEncoder interaction_;
  IntentionModule intention_;
  JointDecoder decoder_;
};

/// Scene re-expressed in the ego's t = 0 pose, all agents and polylines kept.
Scenario to_ego_frame(const Scenario& scn);

/// World-frame prediction for one scenario.
struct Prediction {
  std::string scenario_id;
  std::vector<std::string> agent_ids;
  JointPrediction joint;
  std::vector<IntentionDistribution> intentions;
};

Prediction predict(const TrajectoryModel& model, const Scenario& scn);
/// Maps an ego-frame output back to world coordinates of `scn`.
Prediction to_world(const ModelOutput& out, const Scenario& scn);

/// {scenario_id, modes:[{k, p, agents:[{id, points:[[x,y],...]}]}],
///  intentions:[{id, lateral:{LT,ST,RT}, longitudinal:{ACC,DEC,CON}}]}
nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
/// One row per (mode, agent, step): scenario_id,k,p,agent,t,x,y
std::string prediction_to_csv(const Prediction& p);

}  // namespace riskcast
