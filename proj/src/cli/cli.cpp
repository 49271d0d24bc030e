#include "riskcast/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <CLI11.hpp>

#include "riskcast/core/error.hpp"
#include "riskcast/evaluation.hpp"
#include "riskcast/model.hpp"
#include "riskcast/risk.hpp"
#include "riskcast/scene.hpp"
#include "riskcast/training.hpp"

namespace riskcast {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kRunConfigFile = "run_config.json";
constexpr const char* kPredictionSuffix = ".prediction.json";
constexpr const char* kRiskSuffix = ".risk.json";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string kind_name(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_string()) return "a string";
  if (v.is_number_unsigned()) return "a non-negative integer";
  if (v.is_number_integer()) return "an integer";
  return "a number";
}

bool same_kind(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number_integer()) return v.is_number_integer();
  return v.is_number();
}

void merge_value(json& cfg, const std::string& key, const json& v, const std::string& origin) {
  if (!cfg.contains(key)) throw InputError(origin + ": unknown config key '" + key + "'");
  json& slot = cfg[key];
  if (!same_kind(slot, v)) throw InputError(origin + ": '" + key + "' expects " + kind_name(slot) + ", got " + v.dump());
  slot = slot.is_number_float() ? json(v.get<double>()) : v;
}

// Command-line scalars are JSON where they parse as JSON, strings otherwise.
json parse_scalar(const std::string& s) {
  json v = json::parse(s, nullptr, false);
  if (v.is_discarded() || v.is_null() || v.is_structured()) return json(s);
  return v;
}

json section(const json& flat, const std::string& prefix) {
  json out = json::object();
  for (const auto& [k, v] : flat.items())
    if (k.rfind(prefix + ".", 0) == 0) out[k.substr(prefix.size() + 1)] = v;
  return out;
}

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open " + what);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw InputError(path + ": " + what + " is not valid JSON");
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(path.string() + ": cannot write");
  f << text;
  if (!f) throw InputError(path.string() + ": write failed");
}

std::string with_path(const std::string& path, const std::string& msg) {
  return msg.rfind(path, 0) == 0 ? msg : path + ": " + msg;
}

std::vector<std::string> json_files(const std::string& dir, const std::string& suffix, bool exclude_outputs) {
  if (!fs::is_directory(dir)) throw InputError(dir + ": no such directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (!ends_with(name, suffix) || name == kRunConfigFile) continue;
    if (exclude_outputs && (ends_with(name, kPredictionSuffix) || ends_with(name, kRiskSuffix) || name == "split.json"))
      continue;
    out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Scenario read_scenario(const std::string& path) {
  try {
    return read_scenario_file(path);
  } catch (const std::exception& e) {
    throw InputError(with_path(path, e.what()));
  }
}

TrajectoryModel read_model(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError(path + ": no such checkpoint");
  try {
    return TrajectoryModel::load(path);
  } catch (const std::exception& e) {
    throw InputError(with_path(path, e.what()));
  }
}

// Flags shared by every subcommand plus flags that map onto config keys.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = ".";
  struct Mapped {
    std::string key;
    std::string value;
    CLI::Option* opt = nullptr;
  };
  std::deque<Mapped> mapped;
  // Input paths, by name; strings or string arrays.
  std::map<std::string, std::vector<std::string>> inputs;
  std::map<std::string, CLI::Option*> input_opts;
  std::map<std::string, bool> input_many;

  // Options bind to members, so a Command never moves after this.
  Command(CLI::App& root, const std::string& name, const std::string& desc) {
    app = root.add_subcommand(name, desc);
    app->add_option("--config", config_path, "flat JSON config with dotted keys");
    app->add_option("--set", sets, "override one config key, KEY=VALUE (repeatable)");
    app->add_option("--out", out, "output directory")->capture_default_str();
  }
  Command(const Command&) = delete;
  Command& operator=(const Command&) = delete;

  void map(const std::string& flag, const std::string& key, const std::string& desc) {
    mapped.push_back({key, "", nullptr});
    mapped.back().opt = app->add_option(flag, mapped.back().value, desc);
  }
  void input(const std::string& flag, const std::string& name, const std::string& desc, bool many = false) {
    CLI::Option* opt = app->add_option(flag, inputs[name], desc);
    if (!many) opt->expected(1);
    input_opts[name] = opt;
    input_many[name] = many;
  }
};

struct Resolved {
  json config;  // flat
  json inputs = json::object();
};

// defaults < RISKCAST_SEED < config file < flags
Resolved resolve(const Command& c) {
  Resolved r;
  r.config = default_run_config();
  if (const char* env = std::getenv("RISKCAST_SEED"); env && *env) {
    std::size_t used = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || env[used] != '\0' || env[0] == '-')
      throw InputError(std::string("RISKCAST_SEED: '") + env + "' is not a non-negative integer");
    r.config["seed"] = static_cast<std::uint64_t>(seed);
  }
  json file_inputs = json::object();
  if (!c.config_path.empty()) {
    const json doc = read_json_file(c.config_path, "config");
    if (!doc.is_object()) throw InputError(c.config_path + ": config must be a JSON object");
    for (const auto& [k, v] : doc.items()) {
      if (k == "command") continue;
      if (k == "inputs") {
        if (v.is_object()) file_inputs = v;
        continue;
      }
      merge_value(r.config, k, v, c.config_path);
    }
  }
  for (const auto& m : c.mapped)
    if (m.opt->count() > 0) merge_value(r.config, m.key, parse_scalar(m.value), m.opt->get_name());
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
    merge_value(r.config, s.substr(0, eq), parse_scalar(s.substr(eq + 1)), "--set");
  }
  for (const auto& [name, opt] : c.input_opts) {
    const auto& given = c.inputs.at(name);
    if (opt->count() > 0) {
      r.inputs[name] = c.input_many.at(name) ? json(given) : json(given.back());
    } else if (file_inputs.contains(name)) {
      r.inputs[name] = file_inputs[name];
    }
  }
  return r;
}

std::string input_string(const Resolved& r, const std::string& name) {
  if (!r.inputs.contains(name)) return {};
  const json& v = r.inputs[name];
  if (!v.is_string()) throw InputError("inputs." + name + ": expected a path string");
  return v.get<std::string>();
}

std::vector<std::string> input_list(const Resolved& r, const std::string& name) {
  if (!r.inputs.contains(name)) return {};
  const json& v = r.inputs[name];
  if (v.is_string()) return {v.get<std::string>()};
  try {
    return v.get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw InputError("inputs." + name + ": expected a list of paths");
  }
}

std::vector<Scenario> load_scenarios(const Resolved& r, const std::string& dir_key, const std::string& file_key) {
  std::vector<std::string> paths;
  if (const std::string dir = input_string(r, dir_key); !dir.empty()) {
    paths = json_files(dir, ".json", true);
    if (paths.empty()) throw InputError(dir + ": no scenario files");
  }
  if (!file_key.empty())
    for (const auto& p : input_list(r, file_key)) paths.push_back(p);
  std::vector<Scenario> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_scenario(p));
  return out;
}

std::unordered_map<std::string, Prediction> load_predictions(const std::string& dir) {
  std::unordered_map<std::string, Prediction> out;
  for (const auto& path : json_files(dir, kPredictionSuffix, false)) {
    try {
      Prediction p = prediction_from_json(read_json_file(path, "prediction"));
      const std::string id = p.scenario_id;
      out.emplace(id, std::move(p));
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& e) {
      throw InputError(with_path(path, e.what()));
    }
  }
  return out;
}

// Reorders a prediction's agents to match the scenario.
JointPrediction aligned(const Prediction& p, const Scenario& scn) {
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < p.agent_ids.size(); ++i) slot[p.agent_ids[i]] = i;
  const JointPrediction& src = p.joint;
  JointPrediction jp;
  jp.mode_probs = src.mode_probs;
  jp.trajectories = Tensor({src.modes(), scn.agents.size(), src.steps(), 2});
  for (std::size_t i = 0; i < scn.agents.size(); ++i) {
    const auto it = slot.find(scn.agents[i].id);
    if (it == slot.end())
      throw InputError("prediction for '" + scn.id + "' has no agent '" + scn.agents[i].id + "'");
    jp.origins.push_back(src.origins.at(it->second));
    for (std::size_t k = 0; k < src.modes(); ++k)
      std::copy_n(src.trajectories.values().begin() + static_cast<std::ptrdiff_t>(src.offset(k, it->second, 1)),
                  src.steps() * 2,
                  jp.trajectories.values().begin() + static_cast<std::ptrdiff_t>(jp.offset(k, i, 1)));
  }
  return jp;
}

fs::path prepare_out(const std::string& command, const Command& c, const Resolved& r) {
  const fs::path out(c.out);
  fs::create_directories(out);
  json doc = r.config;
  doc["command"] = command;
  doc["inputs"] = r.inputs;
  write_text(out / kRunConfigFile, doc.dump(2) + "\n");
  return out;
}

template <class F>
auto config_error(const char* what, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw InputError(std::string("config: ") + what + ": " + e.what());
  }
}

GeneratorConfig generator_config(const json& cfg) {
  GeneratorConfig g;
  g.history_steps = cfg["gen.history_steps"].get<std::size_t>();
  g.future_steps = cfg["gen.future_steps"].get<std::size_t>();
  g.dt = cfg["gen.dt"].get<double>();
  g.accel_noise = cfg["gen.accel_noise"].get<double>();
  g.yaw_rate_noise = cfg["gen.yaw_rate_noise"].get<double>();
  if (!(g.dt > 0.0) || g.history_steps == 0) throw InputError("config: gen.dt must be > 0 and gen.history_steps >= 1");
  return g;
}

TrainConfig train_config(const json& cfg) {
  json t = section(cfg, "train");
  t["seed"] = cfg["seed"];
  t["risk"] = section(cfg, "risk");
  return config_error("train", [&] { return train_config_from_json(t); });
}

RiskConfig risk_config(const json& cfg) {
  return config_error("risk", [&] { return risk_config_from_json(section(cfg, "risk")); });
}

int run_gen(const Command& c, std::ostream& out) {
  const Resolved r = resolve(c);
  const json& cfg = r.config;
  const std::string tpl = cfg["gen.template"].get<std::string>();
  std::vector<ScenarioTemplate> templates;
  if (tpl == "all") {
    templates = {ScenarioTemplate::straight, ScenarioTemplate::left_turn, ScenarioTemplate::right_turn,
                 ScenarioTemplate::merge, ScenarioTemplate::crossing_conflict};
  } else {
    templates.push_back(config_error("gen.template", [&] { return template_from_string(tpl); }));
  }
  const GeneratorConfig g = generator_config(cfg);
  const auto scenes = config_error("gen", [&] {
    return generate_dataset(cfg["gen.count"].get<std::size_t>(), cfg["seed"].get<std::uint64_t>(), templates,
                            cfg["gen.min_agents"].get<std::size_t>(), cfg["gen.max_agents"].get<std::size_t>(), g);
  });
  const fs::path dir = prepare_out("gen", c, r);
  for (const auto& s : scenes) write_text(dir / (s.id + ".json"), dump_scenario(s));
  out << "wrote " << scenes.size() << " scenarios to " << dir.string() << "\n";
  return 0;
}

int run_train(const Command& c, std::ostream& out) {
  const Resolved r = resolve(c);
  if (input_string(r, "data").empty()) throw UsageError("train: --data is required");
  const json& cfg = r.config;
  const TrainConfig tcfg = train_config(cfg);
  const ModelConfig mcfg = config_error("model", [&] { return model_config_from_json(section(cfg, "model")); });
  const std::vector<Scenario> data = load_scenarios(r, "data", "");
  std::vector<Scenario> train_set, val_set;
  json split;
  if (const std::string val = input_string(r, "val"); !val.empty()) {
    train_set = data;
    val_set = load_scenarios(r, "val", "");
  } else {
    const DatasetSplit parts = split_dataset(data.size(), tcfg.seed);
    for (const auto* idx : {&parts.train, &parts.val, &parts.test}) {
      const char* name = idx == &parts.train ? "train" : (idx == &parts.val ? "val" : "test");
      split[name] = json::array();
      for (std::size_t i : *idx) {
        split[name].push_back(data[i].id);
        if (idx == &parts.train) train_set.push_back(data[i]);
        if (idx == &parts.val) val_set.push_back(data[i]);
      }
    }
  }
  if (train_set.empty()) throw InputError(input_string(r, "data") + ": too few scenarios to train on");

  TrajectoryModel model = config_error("model", [&] { return TrajectoryModel(mcfg); });
  model.init(tcfg.seed);
  const fs::path dir = prepare_out("train", c, r);
  if (!split.is_null()) write_text(dir / "split.json", split.dump(2) + "\n");
  TrainOutputs outputs;
  outputs.checkpoint_dir = dir / "checkpoints";
  outputs.log_path = dir / "train_log.csv";
  outputs.on_epoch = [&](const EpochStats& e) {
    out << "epoch " << e.epoch << "/" << tcfg.epochs << "  L=" << e.total << "  L_pre=" << e.pre
        << "  L_man=" << e.man << "  L_risk=" << e.risk << "  val_ADE=" << e.val_ade << "\n";
  };
  try {
    train(model, train_set, val_set, tcfg, outputs);
  } catch (const ValidationError& e) {
    throw InputError(e.what());
  }
  model.save(dir / "model.ckpt", {{"epochs", tcfg.epochs}, {"train", train_config_to_json(tcfg)}});
  out << "wrote " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int run_predict(const Command& c, std::ostream& out) {
  const Resolved r = resolve(c);
  const std::string model_path = input_string(r, "model");
  if (model_path.empty()) throw UsageError("predict: --model is required");
  const std::vector<Scenario> scenes = load_scenarios(r, "data", "scenario");
  if (scenes.empty()) throw UsageError("predict: give --scenario or --data");
  const TrajectoryModel model = read_model(model_path);
  const fs::path dir = prepare_out("predict", c, r);
  for (const auto& s : scenes) write_text(dir / (s.id + kPredictionSuffix), prediction_to_json(predict(model, s)).dump() + "\n");
  out << "wrote " << scenes.size() << " predictions to " << dir.string() << "\n";
  return 0;
}

// Predictions from --predictions, else from --model.
std::vector<Prediction> predictions_for(const Resolved& r, const std::vector<Scenario>& scenes, const char* command) {
  const std::string pred_dir = input_string(r, "predictions"), model_path = input_string(r, "model");
  if (!pred_dir.empty() && !model_path.empty())
    throw UsageError(std::string(command) + ": give either --predictions or --model, not both");
  std::vector<Prediction> out;
  if (!pred_dir.empty()) {
    const auto by_id = load_predictions(pred_dir);
    for (const auto& s : scenes) {
      const auto it = by_id.find(s.id);
      if (it == by_id.end()) throw InputError(pred_dir + ": no prediction for scenario '" + s.id + "'");
      out.push_back(it->second);
    }
  } else if (!model_path.empty()) {
    const TrajectoryModel model = read_model(model_path);
    for (const auto& s : scenes) out.push_back(predict(model, s));
  }
  return out;
}

int run_risk(const Command& c, std::ostream& out) {
  const Resolved r = resolve(c);
  const RiskConfig rcfg = risk_config(r.config);
  const std::vector<Scenario> scenes = load_scenarios(r, "data", "scenario");
  if (scenes.empty()) throw UsageError("risk: give --scenario or --data");
  if (input_string(r, "predictions").empty() && input_string(r, "model").empty())
    throw UsageError("risk: give --predictions or --model");
  const std::vector<Prediction> preds = predictions_for(r, scenes, "risk");
  std::vector<std::pair<std::string, json>> docs;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const JointPrediction jp = aligned(preds[s], scenes[s]);
    try {
      const RiskRanking ranking = rank_trajectories(jp, scenes[s], rcfg);
      docs.emplace_back(scenes[s].id, risk_ranking_to_json(scenes[s].id, ranking));
    } catch (const DimensionError& e) {
      throw InputError("scenario '" + scenes[s].id + "': " + e.what());
    }
  }
  const fs::path dir = prepare_out("risk", c, r);
  for (const auto& [id, doc] : docs) write_text(dir / (id + kRiskSuffix), doc.dump(1) + "\n");
  out << "wrote " << docs.size() << " risk reports to " << dir.string() << "\n";
  return 0;
}

int run_eval(const Command& c, std::ostream& out) {
  const Resolved r = resolve(c);
  if (input_string(r, "data").empty()) throw UsageError("eval: --data is required");
  const std::vector<Scenario> scenes = load_scenarios(r, "data", "");
  for (const auto& s : scenes)
    if (!s.has_futures()) throw InputError("scenario '" + s.id + "' has no ground-truth futures");
  const std::vector<Prediction> preds = predictions_for(r, scenes, "eval");
  MetricsReport report;
  const std::string name = input_string(r, "model").empty() ? "predictions" : "model";
  try {
    if (!preds.empty()) report = evaluate_predictions(name, preds, scenes);
    report.append(evaluate_baseline(scenes));
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  const fs::path dir = prepare_out("eval", c, r);
  write_text(dir / "metrics.csv", metrics_to_csv(report));
  write_text(dir / "metrics.json", metrics_to_json(report).dump(1) + "\n");
  for (const auto& row : report.rows)
    if (row.scope == "ego" && row.horizon_s == 5.0 && row.subset.find('/') == std::string::npos)
      out << row.model << "  " << row.subset << "  ADE@5s=" << row.ade << "  FDE@5s=" << row.fde << "  n=" << row.count
          << "\n";
  return 0;
}

}  // namespace

nlohmann::json default_run_config() {
  json f = json::object();
  f["seed"] = std::uint64_t{0};
  const GeneratorConfig g;
  f["gen.template"] = "all";
  f["gen.count"] = std::size_t{100};
  f["gen.min_agents"] = std::size_t{2};
  f["gen.max_agents"] = std::size_t{5};
  f["gen.history_steps"] = g.history_steps;
  f["gen.future_steps"] = g.future_steps;
  f["gen.dt"] = g.dt;
  f["gen.accel_noise"] = g.accel_noise;
  f["gen.yaw_rate_noise"] = g.yaw_rate_noise;
  const json model = model_config_to_json(ModelConfig{});
  const json train = train_config_to_json(TrainConfig{});
  const json risk = risk_config_to_json(RiskConfig{});
  for (const auto& [k, v] : model.items()) f["model." + k] = v;
  for (const auto& [k, v] : train.items())
    if (k != "risk" && k != "seed") f["train." + k] = v;
  for (const auto& [k, v] : risk.items()) f["risk." + k] = v;
  return f;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Risk-aware multi-agent trajectory prediction", "riskcast");
  app.require_subcommand(1);

  Command gen(app, "gen", "generate synthetic scenarios");
  gen.map("--template", "gen.template", "straight|left_turn|right_turn|merge|crossing_conflict|all");
  gen.map("--count", "gen.count", "number of scenarios");
  gen.map("--seed", "seed", "random seed");
  gen.map("--min-agents", "gen.min_agents", "fewest agents per scenario");
  gen.map("--max-agents", "gen.max_agents", "most agents per scenario");

  Command tr(app, "train", "train a model on scenarios with futures");
  tr.input("--data", "data", "directory of scenario JSON files");
  tr.input("--val", "val", "validation directory (default: seeded 70/15/15 split of --data)");
  tr.map("--seed", "seed", "random seed");
  tr.map("--epochs", "train.epochs", "training epochs");
  tr.map("--stage1-epochs", "train.stage1_epochs", "epochs before the risk term is added");
  tr.map("--batch-size", "train.batch_size", "scenes per step");
  tr.map("--lr", "train.lr", "peak learning rate");

  Command pr(app, "predict", "predict joint futures");
  pr.input("--model", "model", "checkpoint");
  pr.input("--scenario", "scenario", "scenario JSON file (repeatable)", true);
  pr.input("--data", "data", "directory of scenario JSON files");

  Command rk(app, "risk", "score and rank predicted modes");
  rk.input("--scenario", "scenario", "scenario JSON file (repeatable)", true);
  rk.input("--data", "data", "directory of scenario JSON files");
  rk.input("--predictions", "predictions", "directory written by predict");
  rk.input("--model", "model", "checkpoint to predict with instead");

  Command ev(app, "eval", "ADE/FDE report against ground truth");
  ev.input("--data", "data", "directory of scenario JSON files with futures");
  ev.input("--predictions", "predictions", "directory written by predict");
  ev.input("--model", "model", "checkpoint to predict with instead");

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    if (name != "gen" && name != "train" && name != "predict" && name != "risk" && name != "eval") {
      err << "error: unknown subcommand '" << name << "'\n\n" << app.help();
      return 2;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (gen.app->parsed()) return run_gen(gen, out);
    if (tr.app->parsed()) return run_train(tr, out);
    if (pr.app->parsed()) return run_predict(pr, out);
    if (rk.app->parsed()) return run_risk(rk, out);
    return run_eval(ev, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace riskcast
