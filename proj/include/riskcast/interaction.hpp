#pragma once

#include <cstddef>
#include <vector>

#include "riskcast/core/layers.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {

struct InteractionConfig {
  std::size_t embed_dim = 64;
  std::size_t attention_heads = 4;
  double context_radius_m = 50.0;
  std::size_t agent_layers = 2;
};

/// Width of the per-step history feature: own-frame kinematics (5),
/// relative encoding to the ego (5), class one-hot (4).
inline constexpr std::size_t kHistoryFeatureDim = 14;
/// Width of the flattened polyline feature: 20 padded waypoints (40), pad
/// mask (20), kind one-hot (3).
inline constexpr std::size_t kMapFeatureDim = 2 * kMaxWaypoints + kMaxWaypoints + 3;

inline constexpr double kPositionScale = 10.0;  // m
inline constexpr double kSpeedScale = 10.0;     // m/s
inline constexpr double kMapScale = 50.0;       // m

/// Network-ready view of a scenario already expressed in the ego frame.
struct SceneInputs {
  std::vector<Tensor> history;  // H+1 steps of [N, kHistoryFeatureDim]
  Tensor map_features;          // [M, kMapFeatureDim]
  std::vector<std::vector<std::size_t>> neighbours;  // per agent, sorted, includes self
  AttentionMask map_visibility;                      // [N, M]
  std::vector<Vec2> origins;                         // t = 0 positions
  std::vector<double> headings;                      // t = 0 yaw
  std::vector<Vec2> step_prior;                      // last observed displacement per step
  std::size_t agent_count() const { return origins.size(); }
};

/// Per-step encoder input: position/yaw/velocity in the agent's own t = 0
/// frame, relative encoding to the ego at that step, class one-hot.
Tensor history_step_features(const Scenario& scn, std::size_t step);
Tensor map_polyline_features(const std::vector<MapPolyline>& map);
SceneInputs build_scene_inputs(const Scenario& ego_frame_scene, double context_radius);

struct InteractionCache {
  LstmSequenceCache lstm;
  MlpCache map_mlp;
  Tensor embeds;
  Tensor map_embeds;

  struct Group {
    std::vector<std::size_t> members;  // subgraph rows
    std::vector<std::size_t> queries;  // agents whose neighbourhood is `members`
    std::vector<BlockCache> blocks;
  };
  std::vector<Group> groups;
  Tensor agent_features;

  std::vector<std::size_t> map_rows;  // agents with at least one visible polyline
  AttentionMask map_mask;             // restricted to map_rows
  BlockCache map_block;
  Tensor features;
};

/// History LSTM, polyline MLP, per-agent two-layer self-attention over the
/// in-radius neighbourhood, and agent-to-map cross-attention.
class InteractionEncoder {
 public:
  InteractionEncoder() = default;
  explicit InteractionEncoder(const InteractionConfig& cfg);

  void init(Rng& rng);

  /// [N, D] final hidden state of the history LSTM.
  Tensor encode_history(const std::vector<Tensor>& history, LstmSequenceCache* cache = nullptr) const;
  /// [M, D]; empty tensor when there are no polylines.
  Tensor encode_map(const Tensor& map_features, MlpCache* cache = nullptr) const;
  /// Row i attends only within neighbours[i]; each distinct neighbourhood is
  /// encoded as its own subgraph.
  Tensor agent_agent_attention(const Tensor& embeds,
                               const std::vector<std::vector<std::size_t>>& neighbours,
                               InteractionCache* cache = nullptr) const;
  /// Rows with no visible polyline pass through unchanged.
  Tensor agent_map_attention(const Tensor& features, const Tensor& map_embeds,
                             const AttentionMask& visibility,
                             InteractionCache* cache = nullptr) const;

  Tensor forward(const SceneInputs& in, InteractionCache* cache = nullptr) const;
  /// Accumulates parameter gradients given dL/d(features).
  void backward(const InteractionCache& cache, const Tensor& grad_features);

  void collect(ParamList& out, const std::string& prefix);
  const InteractionConfig& config() const { return cfg_; }

 private:
  InteractionConfig cfg_;
  Lstm history_;
  Mlp map_;
  std::vector<AttentionBlock> agent_blocks_;
  AttentionBlock map_block_;
};

}  // namespace riskcast
