#include "riskcast/interaction.hpp"

#include <algorithm>
#include <map>

#include "riskcast/core/error.hpp"

namespace riskcast {

namespace {

void write_class_one_hot(Tensor& t, std::size_t row, std::size_t col, AgentClass c) {
  t(row, col + static_cast<std::size_t>(c)) = 1.0;
}

Tensor scatter_rows(const Tensor& rows, const std::vector<std::size_t>& index, std::size_t n) {
  Tensor out = Tensor::matrix(n, rows.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) out(index[r], c) += rows(r, c);
  }
  return out;
}

}  // namespace

Tensor history_step_features(const Scenario& scn, std::size_t step) {
  const std::size_t n = scn.agents.size();
  Tensor out = Tensor::matrix(n, kHistoryFeatureDim);
  const AgentHistory& ego = scn.ego();
  const AgentState ego_s = ego.at(ego.states.at(step));
  for (std::size_t a = 0; a < n; ++a) {
    const AgentHistory& ag = scn.agents[a];
    const KinematicState& cur = ag.states.back();
    const Frame own{cur.position(), cur.yaw};
    const KinematicState& s = ag.states.at(step);
    const Vec2 p = own.to_local_point(s.position());
    const Vec2 v = own.to_local_vector(s.velocity());
    out(a, 0) = p.x / kPositionScale;
    out(a, 1) = p.y / kPositionScale;
    out(a, 2) = wrap_angle(s.yaw - cur.yaw);
    out(a, 3) = v.x / kSpeedScale;
    out(a, 4) = v.y / kSpeedScale;
    const RelEncoding rel = relative_encoding(ego_s, ag.at(s));
    out(a, 5) = rel.sin_heading_diff;
    out(a, 6) = rel.cos_heading_diff;
    out(a, 7) = rel.sin_bearing;
    out(a, 8) = rel.cos_bearing;
    out(a, 9) = rel.distance / kMapScale;
    write_class_one_hot(out, a, 10, ag.agent_class);
  }
  return out;
}

Tensor map_polyline_features(const std::vector<MapPolyline>& map) {
  Tensor out = Tensor::matrix(map.size(), kMapFeatureDim);
  for (std::size_t m = 0; m < map.size(); ++m) {
    const auto& wps = map[m].waypoints;
    if (wps.size() > kMaxWaypoints) {
      throw DimensionError("polyline " + std::to_string(m) + " has " + std::to_string(wps.size()) +
                           " waypoints, max " + std::to_string(kMaxWaypoints));
    }
    for (std::size_t w = 0; w < wps.size(); ++w) {
      out(m, 2 * w) = wps[w].x / kMapScale;
      out(m, 2 * w + 1) = wps[w].y / kMapScale;
      out(m, 2 * kMaxWaypoints + w) = 1.0;
    }
    out(m, 3 * kMaxWaypoints + static_cast<std::size_t>(map[m].kind)) = 1.0;
  }
  return out;
}

SceneInputs build_scene_inputs(const Scenario& scn, double radius) {
  SceneInputs in;
  const std::size_t n = scn.agents.size();
  in.history.reserve(scn.history_steps + 1);
  for (std::size_t s = 0; s <= scn.history_steps; ++s) in.history.push_back(history_step_features(scn, s));
  in.map_features = map_polyline_features(scn.map);

  for (const auto& ag : scn.agents) {
    in.origins.push_back(ag.states.back().position());
    in.headings.push_back(ag.states.back().yaw);
    in.step_prior.push_back(ag.states.size() >= 2 ? ag.states.back().position() - ag.states[ag.states.size() - 2].position()
                                                  : Vec2{});
  }
  in.neighbours.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if ((in.origins[j] - in.origins[i]).norm() <= radius) in.neighbours[i].push_back(j);
    }
  }
  const std::size_t m = scn.map.size();
  in.map_visibility.queries = n;
  in.map_visibility.keys = m;
  in.map_visibility.allowed.assign(n * m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      for (const Vec2& w : scn.map[k].waypoints) {
        if ((w - in.origins[i]).norm() <= radius) {
          in.map_visibility.allowed[i * m + k] = 1;
          break;
        }
      }
    }
  }
  return in;
}

InteractionEncoder::InteractionEncoder(const InteractionConfig& cfg)
    : cfg_(cfg),
      history_("history_lstm", kHistoryFeatureDim, cfg.embed_dim),
      map_("map_mlp", {kMapFeatureDim, cfg.embed_dim, cfg.embed_dim}),
      map_block_("agent_map", cfg.embed_dim, cfg.attention_heads) {
  for (std::size_t l = 0; l < cfg.agent_layers; ++l) {
    agent_blocks_.emplace_back("agent_agent" + std::to_string(l), cfg.embed_dim, cfg.attention_heads);
  }
}

void InteractionEncoder::init(Rng& rng) {
  history_.init(rng);
  map_.init(rng);
  for (auto& b : agent_blocks_) b.init(rng);
  map_block_.init(rng);
}

Tensor InteractionEncoder::encode_history(const std::vector<Tensor>& history,
                                          LstmSequenceCache* cache) const {
  if (history.empty()) throw DimensionError("encode_history: empty history");
  return history_.encode(history, cache);
}

Tensor InteractionEncoder::encode_map(const Tensor& map_features, MlpCache* cache) const {
  if (map_features.empty()) return Tensor::matrix(0, cfg_.embed_dim);
  return map_.forward(map_features, cache);
}

Tensor InteractionEncoder::agent_agent_attention(const Tensor& embeds,
                                                 const std::vector<std::vector<std::size_t>>& neighbours,
                                                 InteractionCache* cache) const {
  const std::size_t n = embeds.rows();
  if (neighbours.size() != n) {
    throw DimensionError("agent_agent_attention: " + std::to_string(neighbours.size()) +
                         " neighbourhoods for " + std::to_string(n) + " agents");
  }
  std::map<std::vector<std::size_t>, std::size_t> index;
  std::vector<InteractionCache::Group> groups;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = index.try_emplace(neighbours[i], groups.size());
    if (inserted) groups.push_back({neighbours[i], {}, {}});
    groups[it->second].queries.push_back(i);
  }

  Tensor out = Tensor::matrix(n, embeds.cols());
  for (auto& g : groups) {
    Tensor x = gather_rows(embeds, g.members);
    const AttentionMask mask = AttentionMask::all(g.members.size(), g.members.size());
    g.blocks.resize(agent_blocks_.size());
    for (std::size_t l = 0; l < agent_blocks_.size(); ++l) {
      x = agent_blocks_[l].forward(x, nullptr, mask, cache ? &g.blocks[l] : nullptr);
    }
    for (std::size_t q : g.queries) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(g.members.begin(), g.members.end(), q) - g.members.begin());
      if (pos == g.members.size() || g.members[pos] != q) {
        throw Error("agent_agent_attention: neighbourhood of agent " + std::to_string(q) +
                    " does not contain itself");
      }
      for (std::size_t c = 0; c < x.cols(); ++c) out(q, c) = x(pos, c);
    }
  }
  if (cache) cache->groups = std::move(groups);
  return out;
}

Tensor InteractionEncoder::agent_map_attention(const Tensor& features, const Tensor& map_embeds,
                                               const AttentionMask& visibility,
                                               InteractionCache* cache) const {
  const std::size_t n = features.rows();
  const std::size_t m = map_embeds.rows();
  if (visibility.queries != n || visibility.keys != m) {
    throw DimensionError("agent_map_attention: mask is [" + std::to_string(visibility.queries) + ", " +
                         std::to_string(visibility.keys) + "], expected [" + std::to_string(n) + ", " +
                         std::to_string(m) + "]");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      if (visibility(i, k)) {
        rows.push_back(i);
        break;
      }
    }
  }
  Tensor out = features;
  AttentionMask sub;
  sub.queries = rows.size();
  sub.keys = m;
  for (std::size_t i : rows) {
    sub.allowed.insert(sub.allowed.end(), visibility.allowed.begin() + static_cast<std::ptrdiff_t>(i * m),
                       visibility.allowed.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
  }
  if (!rows.empty()) {
    const Tensor y = map_block_.forward(gather_rows(features, rows), &map_embeds, sub,
                                        cache ? &cache->map_block : nullptr);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < y.cols(); ++c) out(rows[r], c) = y(r, c);
    }
  }
  if (cache) {
    cache->map_rows = std::move(rows);
    cache->map_mask = std::move(sub);
  }
  return out;
}

Tensor InteractionEncoder::forward(const SceneInputs& in, InteractionCache* cache) const {
  Tensor embeds = encode_history(in.history, cache ? &cache->lstm : nullptr);
  Tensor map_embeds = encode_map(in.map_features, cache ? &cache->map_mlp : nullptr);
  Tensor agents = agent_agent_attention(embeds, in.neighbours, cache);
  Tensor features = agent_map_attention(agents, map_embeds, in.map_visibility, cache);
  if (cache) {
    cache->embeds = std::move(embeds);
    cache->map_embeds = std::move(map_embeds);
    cache->agent_features = std::move(agents);
    cache->features = features;
  }
  return features;
}

void InteractionEncoder::backward(const InteractionCache& cache, const Tensor& grad_features) {
  const std::size_t n = grad_features.rows();
  Tensor d_agents = grad_features;
  if (!cache.map_rows.empty()) {
    const Tensor g = gather_rows(grad_features, cache.map_rows);
    const BlockGrads bg = map_block_.backward(cache.map_block, true, g);
    for (std::size_t r = 0; r < cache.map_rows.size(); ++r) {
      for (std::size_t c = 0; c < bg.dx.cols(); ++c) d_agents(cache.map_rows[r], c) = bg.dx(r, c);
    }
    map_.backward(cache.map_mlp, bg.dcontext);
  }

  Tensor d_embeds = Tensor::matrix(n, grad_features.cols());
  for (const auto& g : cache.groups) {
    Tensor dx = Tensor::matrix(g.members.size(), grad_features.cols());
    for (std::size_t q : g.queries) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(g.members.begin(), g.members.end(), q) - g.members.begin());
      for (std::size_t c = 0; c < dx.cols(); ++c) dx(pos, c) += d_agents(q, c);
    }
    for (std::size_t l = agent_blocks_.size(); l-- > 0;) {
      dx = agent_blocks_[l].backward(g.blocks[l], false, dx).dx;
    }
    d_embeds += scatter_rows(dx, g.members, n);
  }
  history_.encode_backward(cache.lstm, d_embeds);
}

void InteractionEncoder::collect(ParamList& out, const std::string& prefix) {
  history_.collect(out, prefix + ".history_lstm");
  map_.collect(out, prefix + ".map_mlp");
  for (std::size_t l = 0; l < agent_blocks_.size(); ++l) {
    agent_blocks_[l].collect(out, prefix + ".agent_agent" + std::to_string(l));
  }
  map_block_.collect(out, prefix + ".agent_map");
}

}  // namespace riskcast
