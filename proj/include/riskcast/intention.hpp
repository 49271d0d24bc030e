#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "riskcast/core/layers.hpp"
#include "riskcast/geometry.hpp"
#include "riskcast/scene.hpp"

namespace riskcast {

enum class Lateral { LT, ST, RT };
enum class Longitudinal { ACC, DEC, CON };

std::string_view to_string(Lateral l);
std::string_view to_string(Longitudinal l);

struct IntentionDistribution {
  std::array<double, 3> lateral{1.0 / 3, 1.0 / 3, 1.0 / 3};       // LT, ST, RT
  std::array<double, 3> longitudinal{1.0 / 3, 1.0 / 3, 1.0 / 3};  // ACC, DEC, CON
};

struct IntentionLabels {
  Lateral lateral = Lateral::ST;
  Longitudinal longitudinal = Longitudinal::CON;
  friend bool operator==(const IntentionLabels&, const IntentionLabels&) = default;
};

struct IntentionThresholds {
  double yaw_rad = 0.26;
  double speed_mps = 1.0;
};

/// Lateral label from the accumulated (wrapped, step-wise) yaw change from
/// `current` to the end of `future`; longitudinal label from the speed change.
/// Throws ValidationError on an empty future.
IntentionLabels label_intentions(const KinematicState& current, std::span<const KinematicState> future,
                                 const IntentionThresholds& th = {});
IntentionLabels label_intentions(const AgentHistory& agent, const IntentionThresholds& th = {});

/// K joint futures. trajectories is [K, N, T, 2], holding positions for
/// t = 1..T; origins hold the t = 0 positions the offsets were integrated from.
struct JointPrediction {
  Tensor trajectories;
  std::vector<double> mode_probs;
  std::vector<Vec2> origins;

  std::size_t modes() const { return trajectories.dim(0); }
  std::size_t agents() const { return trajectories.dim(1); }
  std::size_t steps() const { return trajectories.dim(2); }
  /// Position of agent i in mode k at step t; t = 0 is the origin.
  Vec2 position(std::size_t k, std::size_t i, std::size_t t) const;
  std::size_t offset(std::size_t k, std::size_t i, std::size_t t) const {
    return ((k * agents() + i) * steps() + (t - 1)) * 2;
  }
};

/// argmax_k p_k, lowest index on ties.
std::size_t select_mode(const JointPrediction& jp);
std::size_t select_mode(std::span<const double> probs);

struct IntentionConfig {
  std::size_t hidden = 64;
  std::size_t class_embed_dim = 32;  // per intention class
  std::size_t feature_dim = 32;      // width of Z
};

struct IntentionCache {
  MlpCache lateral_mlp, longitudinal_mlp;
  Tensor lateral_probs, longitudinal_probs;  // [N, 3]
  Tensor lateral_embed, longitudinal_embed;  // [N, 3E]
  Tensor mixed;                              // [N, 2E]
  MlpCache fuse_mlp;
  Tensor z;                                  // [N, Dz]
};

/// dL/d(lateral probs), dL/d(longitudinal probs) supplied by the loss; may be
/// empty.
struct IntentionGrads {
  Tensor lateral_probs;
  Tensor longitudinal_probs;
};

class IntentionModule {
 public:
  IntentionModule() = default;
  IntentionModule(std::size_t in_dim, const IntentionConfig& cfg);

  void init(Rng& rng);

  /// Softmax heads; returns {lateral [N,3], longitudinal [N,3]}.
  std::pair<Tensor, Tensor> predict_intention(const Tensor& features, IntentionCache* cache = nullptr) const;
  /// Per-class embeddings, [N, 3E] each: columns c*E..(c+1)*E belong to class c.
  std::pair<Tensor, Tensor> class_embeddings(const Tensor& features) const;
  /// Z = softmax(MLP(mix_la ++ mix_lo)) with mix = sum_c p_c * e_c.
  Tensor fuse_intention(const Tensor& e_la, const Tensor& e_lo, const Tensor& p_la, const Tensor& p_lo,
                        IntentionCache* cache = nullptr) const;

  /// Runs all three stages; cache receives every intermediate.
  Tensor forward(const Tensor& features, IntentionCache* cache = nullptr) const;
  /// Returns dL/d(features).
  Tensor backward(const Tensor& features, const IntentionCache& cache, const Tensor& grad_z,
                  const IntentionGrads& grad_probs);

  void collect(ParamList& out, const std::string& prefix);
  std::size_t feature_dim() const { return cfg_.feature_dim; }

 private:
  IntentionConfig cfg_;
  Mlp lateral_head_, longitudinal_head_;
  Linear lateral_embed_, longitudinal_embed_;
  Mlp fuse_;
};

std::vector<IntentionDistribution> to_distributions(const Tensor& lateral, const Tensor& longitudinal);

struct DecoderConfig {
  std::size_t modes = 6;
  std::size_t future_steps = 50;
  std::size_t hidden = 128;
  double step_scale = 1.0;  // metres per unit of raw head output per step
  bool velocity_prior = true;  // add the last observed displacement to every step
};

struct DecoderCache {
  Tensor input;  // [N, Din]
  MlpCache trajectory_mlp;
  std::vector<std::size_t> pool_argmax;  // per column
  Tensor pooled;                         // [1, Din]
  MlpCache prob_mlp;
  std::vector<double> probs;
  std::vector<double> headings;
};

/// Per-mode trajectory head emitting step offsets in each agent's t = 0
/// heading frame, and a max-pooled scene head for mode probabilities. A
/// non-empty `step_prior` adds a fixed per-agent displacement to every step,
/// so zero head output extrapolates that displacement.
class JointDecoder {
 public:
  JointDecoder() = default;
  JointDecoder(std::size_t in_dim, const DecoderConfig& cfg);

  void init(Rng& rng);
  JointPrediction decode_joint(const Tensor& input, const std::vector<Vec2>& origins,
                               const std::vector<double>& headings, DecoderCache* cache = nullptr,
                               std::span<const Vec2> step_prior = {}) const;

  /// grad_positions is dL/d(trajectories), grad_probs dL/d(mode_probs)
  /// (either may be empty). Returns dL/d(input).
  Tensor backward(const DecoderCache& cache, const Tensor& grad_positions,
                  std::span<const double> grad_probs);
  /// Accumulates gradients of the trajectory head only; the input gradient is
  /// discarded.
  void backward_trajectory_only(const DecoderCache& cache, const Tensor& grad_positions);

  void collect(ParamList& out, const std::string& prefix);
  const DecoderConfig& config() const { return cfg_; }

 private:
  Tensor position_grad_to_raw(const DecoderCache& cache, const Tensor& grad_positions) const;

  DecoderConfig cfg_;
  Mlp trajectory_;
  Mlp probability_;
};

}  // namespace riskcast
