#include "riskcast/model.hpp"

#include <sstream>

#include "riskcast/core/checkpoint.hpp"
#include "riskcast/core/error.hpp"

namespace riskcast {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
  return json{
      {"embed_dim", cfg.interaction.embed_dim},
      {"attention_heads", cfg.interaction.attention_heads},
      {"context_radius_m", cfg.interaction.context_radius_m},
      {"agent_layers", cfg.interaction.agent_layers},
      {"intention_hidden", cfg.intention.hidden},
      {"class_embed_dim", cfg.intention.class_embed_dim},
      {"intention_feature_dim", cfg.intention.feature_dim},
      {"modes", cfg.decoder.modes},
      {"future_steps", cfg.decoder.future_steps},
      {"decoder_hidden", cfg.decoder.hidden},
      {"step_scale", cfg.decoder.step_scale},
      {"velocity_prior", cfg.decoder.velocity_prior},
  };
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("embed_dim", cfg.interaction.embed_dim);
  get("attention_heads", cfg.interaction.attention_heads);
  get("context_radius_m", cfg.interaction.context_radius_m);
  get("agent_layers", cfg.interaction.agent_layers);
  get("intention_hidden", cfg.intention.hidden);
  get("class_embed_dim", cfg.intention.class_embed_dim);
  get("intention_feature_dim", cfg.intention.feature_dim);
  get("modes", cfg.decoder.modes);
  get("future_steps", cfg.decoder.future_steps);
  get("decoder_hidden", cfg.decoder.hidden);
  get("step_scale", cfg.decoder.step_scale);
  get("velocity_prior", cfg.decoder.velocity_prior);
  return cfg;
}

TrajectoryModel::TrajectoryModel(const ModelConfig& cfg)
    : cfg_(cfg),
      interaction_(cfg.interaction),
      intention_(cfg.interaction.embed_dim, cfg.intention),
      decoder_(cfg.interaction.embed_dim + cfg.intention.feature_dim, cfg.decoder) {
  if (cfg.interaction.embed_dim % cfg.interaction.attention_heads != 0) {
    throw ValidationError("embed_dim " + std::to_string(cfg.interaction.embed_dim) +
                          " is not divisible by attention_heads " +
                          std::to_string(cfg.interaction.attention_heads));
  }
  if (cfg.decoder.modes == 0 || cfg.decoder.future_steps == 0) {
    throw ValidationError("decoder needs at least one mode and one future step");
  }
}

void TrajectoryModel::init(std::uint64_t seed) {
  Rng rng(seed);
  interaction_.init(rng);
  intention_.init(rng);
  decoder_.init(rng);
}

ParamList TrajectoryModel::parameters() {
  ParamList out;
  interaction_.collect(out, "interaction");
  intention_.collect(out, "intention");
  decoder_.collect(out, "decoder");
  return out;
}

ModelOutput TrajectoryModel::forward(const Scenario& scene, ModelCache* cache) const {
  ModelCache local;
  ModelCache& c = cache ? *cache : local;
  c.inputs = build_scene_inputs(scene, cfg_.interaction.context_radius_m);
  c.features = interaction_.forward(c.inputs, &c.interaction);

  ModelOutput out;
  const Tensor z = intention_.forward(c.features, &c.intention);
  out.lateral = c.intention.lateral_probs;
  out.longitudinal = c.intention.longitudinal_probs;
  out.joint = decoder_.decode_joint(concat_cols(c.features, z), c.inputs.origins, c.inputs.headings, &c.decoder,
                                    cfg_.decoder.velocity_prior ? std::span<const Vec2>(c.inputs.step_prior)
                                                                : std::span<const Vec2>());
  return out;
}

void TrajectoryModel::backward(const ModelCache& cache, const ModelGrads& grads) {
  if (!grads.risk_positions.empty()) decoder_.backward_trajectory_only(cache.decoder, grads.risk_positions);

  const Tensor d_in = decoder_.backward(cache.decoder, grads.positions, grads.mode_probs);
  const std::size_t d = cfg_.interaction.embed_dim;
  Tensor d_features = slice_cols(d_in, 0, d);
  const Tensor d_z = slice_cols(d_in, d, cfg_.intention.feature_dim);
  d_features += intention_.backward(cache.features, cache.intention, d_z,
                                    {grads.lateral_probs, grads.longitudinal_probs});
  interaction_.backward(cache.interaction, d_features);
}

void TrajectoryModel::save(const std::filesystem::path& path, const json& extra_meta) {
  json meta = extra_meta.is_object() ? extra_meta : json::object();
  meta["model"] = model_config_to_json(cfg_);
  write_checkpoint(path, parameters(), meta);
}

TrajectoryModel TrajectoryModel::load(const std::filesystem::path& path) {
  const json doc = read_checkpoint(path);
  ModelConfig cfg;
  if (doc.contains("meta") && doc.at("meta").contains("model")) {
    cfg = model_config_from_json(doc.at("meta").at("model"));
  }
  TrajectoryModel model(cfg);
  try {
    load_checkpoint_json(doc, model.parameters());
  } catch (const Error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return model;
}

Scenario to_ego_frame(const Scenario& scn) { return local_frame(scn, scn.ego().id); }

Prediction to_world(const ModelOutput& out, const Scenario& scn) {
  const KinematicState& pose = scn.ego().states.back();
  const Frame frame{pose.position(), pose.yaw};
  Prediction p;
  p.scenario_id = scn.id;
  for (const auto& a : scn.agents) p.agent_ids.push_back(a.id);
  p.joint = out.joint;
  for (std::size_t i = 0; i < p.joint.origins.size(); ++i) {
    p.joint.origins[i] = frame.to_world_point(out.joint.origins[i]);
  }
  for (std::size_t o = 0; o < p.joint.trajectories.size(); o += 2) {
    const Vec2 w = frame.to_world_point({out.joint.trajectories[o], out.joint.trajectories[o + 1]});
    p.joint.trajectories[o] = w.x;
    p.joint.trajectories[o + 1] = w.y;
  }
  p.intentions = to_distributions(out.lateral, out.longitudinal);
  return p;
}

Prediction predict(const TrajectoryModel& model, const Scenario& scn) {
  validate(scn);
  if (scn.future_steps != model.config().decoder.future_steps) {
    throw ValidationError("scenario '" + scn.id + "' has T = " + std::to_string(scn.future_steps) +
                          " but the model predicts " + std::to_string(model.config().decoder.future_steps) +
                          " steps");
  }
  return to_world(model.forward(to_ego_frame(scn)), scn);
}

json prediction_to_json(const Prediction& p) {
  const JointPrediction& jp = p.joint;
  json modes = json::array();
  for (std::size_t k = 0; k < jp.modes(); ++k) {
    json agents = json::array();
    for (std::size_t i = 0; i < jp.agents(); ++i) {
      json pts = json::array();
      for (std::size_t t = 1; t <= jp.steps(); ++t) {
        const Vec2 q = jp.position(k, i, t);
        pts.push_back({q.x, q.y});
      }
      agents.push_back({{"id", p.agent_ids.at(i)},
                        {"origin", {jp.origins.at(i).x, jp.origins.at(i).y}},
                        {"points", std::move(pts)}});
    }
    modes.push_back({{"k", k}, {"p", jp.mode_probs.at(k)}, {"agents", std::move(agents)}});
  }
  json intentions = json::array();
  for (std::size_t i = 0; i < p.intentions.size(); ++i) {
    const auto& d = p.intentions[i];
    intentions.push_back({{"id", p.agent_ids.at(i)},
                          {"lateral", {{"LT", d.lateral[0]}, {"ST", d.lateral[1]}, {"RT", d.lateral[2]}}},
                          {"longitudinal",
                           {{"ACC", d.longitudinal[0]}, {"DEC", d.longitudinal[1]}, {"CON", d.longitudinal[2]}}}});
  }
  return json{{"scenario_id", p.scenario_id}, {"modes", std::move(modes)}, {"intentions", std::move(intentions)}};
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  try {
    p.scenario_id = j.at("scenario_id").get<std::string>();
    const json& modes = j.at("modes");
    if (!modes.is_array() || modes.empty()) throw ValidationError("/modes: expected a non-empty array");
    const json& first = modes.at(0).at("agents");
    const std::size_t kk = modes.size();
    const std::size_t n = first.size();
    if (n == 0) throw ValidationError("/modes/0/agents: empty");
    const std::size_t tt = first.at(0).at("points").size();
    p.joint.trajectories = Tensor({kk, n, tt, 2});
    for (const auto& a : first) {
      p.agent_ids.push_back(a.at("id").get<std::string>());
      const auto& o = a.at("origin");
      p.joint.origins.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
    }
    for (std::size_t k = 0; k < kk; ++k) {
      const json& m = modes[k];
      p.joint.mode_probs.push_back(m.at("p").get<double>());
      const json& agents = m.at("agents");
      if (agents.size() != n) {
        throw ValidationError("/modes/" + std::to_string(k) + "/agents: expected " + std::to_string(n) + " agents");
      }
      for (std::size_t i = 0; i < n; ++i) {
        const json& pts = agents[i].at("points");
        if (pts.size() != tt) {
          throw ValidationError("/modes/" + std::to_string(k) + "/agents/" + std::to_string(i) +
                                "/points: expected " + std::to_string(tt) + " points");
        }
        for (std::size_t t = 0; t < tt; ++t) {
          const std::size_t off = p.joint.offset(k, i, t + 1);
          p.joint.trajectories[off] = pts[t].at(0).get<double>();
          p.joint.trajectories[off + 1] = pts[t].at(1).get<double>();
        }
      }
    }
    if (j.contains("intentions")) {
      for (const auto& d : j.at("intentions")) {
        IntentionDistribution dist;
        const auto& la = d.at("lateral");
        const auto& lo = d.at("longitudinal");
        dist.lateral = {la.at("LT").get<double>(), la.at("ST").get<double>(), la.at("RT").get<double>()};
        dist.longitudinal = {lo.at("ACC").get<double>(), lo.at("DEC").get<double>(), lo.at("CON").get<double>()};
        p.intentions.push_back(dist);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("prediction document: ") + e.what());
  }
  return p;
}

std::string prediction_to_csv(const Prediction& p) {
  std::ostringstream os;
  os.precision(17);
  os << "scenario_id,k,p,agent,t,x,y\n";
  const JointPrediction& jp = p.joint;
  for (std::size_t k = 0; k < jp.modes(); ++k) {
    for (std::size_t i = 0; i < jp.agents(); ++i) {
      for (std::size_t t = 1; t <= jp.steps(); ++t) {
        const Vec2 q = jp.position(k, i, t);
        os << p.scenario_id << ',' << k << ',' << jp.mode_probs[k] << ',' << p.agent_ids.at(i) << ',' << t << ','
           << q.x << ',' << q.y << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace riskcast
