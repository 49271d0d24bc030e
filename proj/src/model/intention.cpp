#include "riskcast/intention.hpp"

#include <cmath>

#include "riskcast/core/error.hpp"
#include "riskcast/core/functional.hpp"

namespace riskcast {

std::string_view to_string(Lateral l) {
  switch (l) {
    case Lateral::LT: return "LT";
    case Lateral::ST: return "ST";
    case Lateral::RT: return "RT";
  }
  return "?";
}

std::string_view to_string(Longitudinal l) {
  switch (l) {
    case Longitudinal::ACC: return "ACC";
    case Longitudinal::DEC: return "DEC";
    case Longitudinal::CON: return "CON";
  }
  return "?";
}

IntentionLabels label_intentions(const KinematicState& current, std::span<const KinematicState> future,
                                 const IntentionThresholds& th) {
  if (future.empty()) throw ValidationError("label_intentions: empty future");
  double yaw_change = 0.0;
  double prev = current.yaw;
  for (const auto& s : future) {
    yaw_change += wrap_angle(s.yaw - prev);
    prev = s.yaw;
  }
  const double speed_change = future.back().speed() - current.speed();

  IntentionLabels out;
  if (yaw_change > th.yaw_rad) out.lateral = Lateral::LT;
  else if (yaw_change < -th.yaw_rad) out.lateral = Lateral::RT;
  if (speed_change > th.speed_mps) out.longitudinal = Longitudinal::ACC;
  else if (speed_change < -th.speed_mps) out.longitudinal = Longitudinal::DEC;
  return out;
}

IntentionLabels label_intentions(const AgentHistory& agent, const IntentionThresholds& th) {
  if (agent.future.empty()) {
    throw ValidationError("label_intentions: agent '" + agent.id + "' has no future");
  }
  return label_intentions(agent.states.back(), agent.future, th);
}

Vec2 JointPrediction::position(std::size_t k, std::size_t i, std::size_t t) const {
  if (t == 0) return origins.at(i);
  const std::size_t o = offset(k, i, t);
  return {trajectories[o], trajectories[o + 1]};
}

std::size_t select_mode(std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("select_mode: no modes");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return best;
}

std::size_t select_mode(const JointPrediction& jp) { return select_mode(jp.mode_probs); }

std::vector<IntentionDistribution> to_distributions(const Tensor& lateral, const Tensor& longitudinal) {
  std::vector<IntentionDistribution> out(lateral.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[i].lateral[c] = lateral(i, c);
      out[i].longitudinal[c] = longitudinal(i, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------- IntentionModule

IntentionModule::IntentionModule(std::size_t in_dim, const IntentionConfig& cfg)
    : cfg_(cfg),
      lateral_head_("lateral_head", {in_dim, cfg.hidden, 3}),
      longitudinal_head_("longitudinal_head", {in_dim, cfg.hidden, 3}),
      lateral_embed_("lateral_embed", in_dim, 3 * cfg.class_embed_dim),
      longitudinal_embed_("longitudinal_embed", in_dim, 3 * cfg.class_embed_dim),
      fuse_("fuse", {2 * cfg.class_embed_dim, cfg.hidden, cfg.feature_dim}) {}

void IntentionModule::init(Rng& rng) {
  lateral_head_.init(rng);
  longitudinal_head_.init(rng);
  lateral_embed_.init(rng);
  longitudinal_embed_.init(rng);
  fuse_.init(rng);
}

std::pair<Tensor, Tensor> IntentionModule::predict_intention(const Tensor& features,
                                                             IntentionCache* cache) const {
  Tensor la = softmax(lateral_head_.forward(features, cache ? &cache->lateral_mlp : nullptr));
  Tensor lo = softmax(longitudinal_head_.forward(features, cache ? &cache->longitudinal_mlp : nullptr));
  return {std::move(la), std::move(lo)};
}

std::pair<Tensor, Tensor> IntentionModule::class_embeddings(const Tensor& features) const {
  return {lateral_embed_.forward(features), longitudinal_embed_.forward(features)};
}

namespace {

Tensor mix_classes(const Tensor& embed, const Tensor& probs, std::size_t e) {
  if (embed.cols() != 3 * e || probs.cols() != 3 || embed.rows() != probs.rows()) {
    throw DimensionError("fuse_intention: embedding " + embed.shape_string() + " and probabilities " +
                         probs.shape_string() + " do not match 3 classes of width " + std::to_string(e));
  }
  Tensor out = Tensor::matrix(embed.rows(), e);
  for (std::size_t i = 0; i < embed.rows(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < e; ++j) out(i, j) += probs(i, c) * embed(i, c * e + j);
    }
  }
  return out;
}

/// Gradients of mix_classes w.r.t. the embedding and the probabilities.
void mix_classes_backward(const Tensor& embed, const Tensor& probs, const Tensor& grad_mix,
                          std::size_t col0, std::size_t e, Tensor& d_embed, Tensor& d_probs) {
  d_embed = Tensor::matrix(embed.rows(), embed.cols());
  for (std::size_t i = 0; i < embed.rows(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < e; ++j) {
        const double g = grad_mix(i, col0 + j);
        d_embed(i, c * e + j) = probs(i, c) * g;
        acc += embed(i, c * e + j) * g;
      }
      d_probs(i, c) += acc;
    }
  }
}

}  // namespace

Tensor IntentionModule::fuse_intention(const Tensor& e_la, const Tensor& e_lo, const Tensor& p_la,
                                       const Tensor& p_lo, IntentionCache* cache) const {
  const std::size_t e = cfg_.class_embed_dim;
  Tensor mixed = concat_cols(mix_classes(e_la, p_la, e), mix_classes(e_lo, p_lo, e));
  Tensor z = softmax(fuse_.forward(mixed, cache ? &cache->fuse_mlp : nullptr));
  if (cache) cache->mixed = std::move(mixed);
  return z;
}

Tensor IntentionModule::forward(const Tensor& features, IntentionCache* cache) const {
  auto [la, lo] = predict_intention(features, cache);
  auto [e_la, e_lo] = class_embeddings(features);
  Tensor z = fuse_intention(e_la, e_lo, la, lo, cache);
  if (cache) {
    cache->lateral_probs = std::move(la);
    cache->longitudinal_probs = std::move(lo);
    cache->lateral_embed = std::move(e_la);
    cache->longitudinal_embed = std::move(e_lo);
    cache->z = z;
  }
  return z;
}

Tensor IntentionModule::backward(const Tensor& features, const IntentionCache& cache, const Tensor& grad_z,
                                 const IntentionGrads& grad_probs) {
  const std::size_t n = features.rows();
  const std::size_t e = cfg_.class_embed_dim;
  const Tensor d_mixed = fuse_.backward(cache.fuse_mlp, softmax_backward(cache.z, grad_z));

  Tensor dp_la = grad_probs.lateral_probs.empty() ? Tensor::matrix(n, 3) : grad_probs.lateral_probs;
  Tensor dp_lo = grad_probs.longitudinal_probs.empty() ? Tensor::matrix(n, 3) : grad_probs.longitudinal_probs;
  Tensor de_la, de_lo;
  mix_classes_backward(cache.lateral_embed, cache.lateral_probs, d_mixed, 0, e, de_la, dp_la);
  mix_classes_backward(cache.longitudinal_embed, cache.longitudinal_probs, d_mixed, e, e, de_lo, dp_lo);

  Tensor dx = lateral_embed_.backward(features, de_la);
  dx += longitudinal_embed_.backward(features, de_lo);
  dx += lateral_head_.backward(cache.lateral_mlp, softmax_backward(cache.lateral_probs, dp_la));
  dx += longitudinal_head_.backward(cache.longitudinal_mlp, softmax_backward(cache.longitudinal_probs, dp_lo));
  return dx;
}

void IntentionModule::collect(ParamList& out, const std::string& prefix) {
  lateral_head_.collect(out, prefix + ".lateral_head");
  longitudinal_head_.collect(out, prefix + ".longitudinal_head");
  lateral_embed_.collect(out, prefix + ".lateral_embed");
  longitudinal_embed_.collect(out, prefix + ".longitudinal_embed");
  fuse_.collect(out, prefix + ".fuse");
}

// ---------------------------------------------------------------- JointDecoder

JointDecoder::JointDecoder(std::size_t in_dim, const DecoderConfig& cfg)
    : cfg_(cfg),
      trajectory_("trajectory_head", {in_dim, cfg.hidden, cfg.hidden, cfg.modes * cfg.future_steps * 2}),
      probability_("probability_head", {in_dim, cfg.hidden, cfg.modes}) {}

void JointDecoder::init(Rng& rng) {
  trajectory_.init(rng);
  probability_.init(rng);
}

JointPrediction JointDecoder::decode_joint(const Tensor& input, const std::vector<Vec2>& origins,
                                           const std::vector<double>& headings, DecoderCache* cache,
                                           std::span<const Vec2> step_prior) const {
  const std::size_t n = input.rows();
  const std::size_t kk = cfg_.modes;
  const std::size_t tt = cfg_.future_steps;
  if (origins.size() != n || headings.size() != n) {
    throw DimensionError("decode_joint: " + std::to_string(n) + " feature rows but " +
                         std::to_string(origins.size()) + " origins");
  }
  if (n == 0) throw DimensionError("decode_joint: no agents");
  if (!step_prior.empty() && step_prior.size() != n)
    throw DimensionError("decode_joint: " + std::to_string(step_prior.size()) + " step priors for " +
                         std::to_string(n) + " agents");

  const Tensor raw = trajectory_.forward(input, cache ? &cache->trajectory_mlp : nullptr);
  JointPrediction jp;
  jp.origins = origins;
  jp.trajectories = Tensor({kk, n, tt, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(headings[i]);
    const double s = std::sin(headings[i]);
    const Vec2 prior = step_prior.empty() ? Vec2{} : step_prior[i];
    for (std::size_t k = 0; k < kk; ++k) {
      Vec2 p = origins[i];
      for (std::size_t t = 0; t < tt; ++t) {
        const double dx = raw(i, (k * tt + t) * 2) * cfg_.step_scale;
        const double dy = raw(i, (k * tt + t) * 2 + 1) * cfg_.step_scale;
        p += prior + Vec2{c * dx - s * dy, s * dx + c * dy};
        const std::size_t o = jp.offset(k, i, t + 1);
        jp.trajectories[o] = p.x;
        jp.trajectories[o + 1] = p.y;
      }
    }
  }

  const std::size_t d = input.cols();
  Tensor pooled = Tensor::matrix(1, d);
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t col = 0; col < d; ++col) {
    pooled(0, col) = input(0, col);
    for (std::size_t i = 1; i < n; ++i) {
      if (input(i, col) > pooled(0, col)) {
        pooled(0, col) = input(i, col);
        argmax[col] = i;
      }
    }
  }
  const Tensor logits = probability_.forward(pooled, cache ? &cache->prob_mlp : nullptr);
  jp.mode_probs = softmax(logits.values());

  if (cache) {
    cache->input = input;
    cache->pool_argmax = std::move(argmax);
    cache->pooled = std::move(pooled);
    cache->probs = jp.mode_probs;
    cache->headings = headings;
  }
  return jp;
}

Tensor JointDecoder::position_grad_to_raw(const DecoderCache& cache, const Tensor& grad_positions) const {
  const std::size_t n = cache.input.rows();
  const std::size_t kk = cfg_.modes;
  const std::size_t tt = cfg_.future_steps;
  if (grad_positions.size() != kk * n * tt * 2) {
    throw DimensionError("decoder backward: position gradient " + grad_positions.shape_string() +
                         " does not match [" + std::to_string(kk) + ", " + std::to_string(n) + ", " +
                         std::to_string(tt) + ", 2]");
  }
  Tensor d_raw = Tensor::matrix(n, kk * tt * 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(cache.headings[i]);
    const double s = std::sin(cache.headings[i]);
    for (std::size_t k = 0; k < kk; ++k) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t t = tt; t-- > 0;) {
        const std::size_t o = ((k * n + i) * tt + t) * 2;
        gx += grad_positions[o];
        gy += grad_positions[o + 1];
        d_raw(i, (k * tt + t) * 2) = (c * gx + s * gy) * cfg_.step_scale;
        d_raw(i, (k * tt + t) * 2 + 1) = (-s * gx + c * gy) * cfg_.step_scale;
      }
    }
  }
  return d_raw;
}

Tensor JointDecoder::backward(const DecoderCache& cache, const Tensor& grad_positions,
                              std::span<const double> grad_probs) {
  const std::size_t n = cache.input.rows();
  const std::size_t d = cache.input.cols();
  Tensor dx = Tensor::matrix(n, d);
  if (!grad_positions.empty()) {
    dx += trajectory_.backward(cache.trajectory_mlp, position_grad_to_raw(cache, grad_positions));
  }
  if (!grad_probs.empty()) {
    if (grad_probs.size() != cfg_.modes) throw DimensionError("decoder backward: mode gradient size");
    const Tensor p = Tensor::row(cache.probs);
    const Tensor dlogits = softmax_backward(p, Tensor::row(grad_probs));
    const Tensor dpooled = probability_.backward(cache.prob_mlp, dlogits);
    for (std::size_t col = 0; col < d; ++col) dx(cache.pool_argmax[col], col) += dpooled(0, col);
  }
  return dx;
}

void JointDecoder::backward_trajectory_only(const DecoderCache& cache, const Tensor& grad_positions) {
  trajectory_.backward(cache.trajectory_mlp, position_grad_to_raw(cache, grad_positions));
}

void JointDecoder::collect(ParamList& out, const std::string& prefix) {
  trajectory_.collect(out, prefix + ".trajectory_head");
  probability_.collect(out, prefix + ".probability_head");
}

}  // namespace riskcast
