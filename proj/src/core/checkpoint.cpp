#include "riskcast/core/checkpoint.hpp"

#include <fstream>
#include <map>

#include "riskcast/core/error.hpp"

namespace riskcast {

using nlohmann::json;

json checkpoint_to_json(const ParamList& params, const json& meta) {
  json tensors = json::array();
  for (const auto& [name, p] : params) {
    json shape = json::array();
    for (std::size_t d : p->value.shape()) shape.push_back(d);
    json data = json::array();
    for (double v : p->value.values()) data.push_back(v);
    tensors.push_back({{"name", name}, {"shape", std::move(shape)}, {"data", std::move(data)}});
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"meta", meta},
          {"tensors", std::move(tensors)}};
}

void load_checkpoint_json(const json& doc, const ParamList& params) {
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw ValidationError("not a riskcast checkpoint");
  }
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + doc.value("version", json()).dump());
  }
  std::map<std::string, const json*> by_name;
  for (const json& t : doc.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  if (by_name.size() != params.size()) {
    throw ValidationError("checkpoint has " + std::to_string(by_name.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("checkpoint is missing tensor '" + name + "'");
    const json& t = *it->second;
    auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw ValidationError("tensor '" + name + "' has shape " + t.at("shape").dump() +
                            ", model expects " + p->value.shape_string());
    }
    auto data = t.at("data").get<std::vector<double>>();
    p->value = Tensor(std::move(shape), std::move(data));
    p->grad = Tensor(p->value.shape());
  }
}

void write_checkpoint(const std::filesystem::path& path, const ParamList& params,
                      const json& meta) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params, meta).dump() << '\n';
}

json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(path.string() + ": cannot open checkpoint");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace riskcast
