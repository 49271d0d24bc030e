#pragma once

#include <filesystem>

#include <json.hpp>

#include "riskcast/core/param.hpp"

namespace riskcast {

inline constexpr const char* kCheckpointFormat = "riskcast.checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout (JSON):
///   { "format": "riskcast.checkpoint", "version": 1, "meta": {...},
///     "tensors": [ { "name": str, "shape": [int...], "data": [double...] } ] }
/// Doubles are written in shortest round-trip form, so save/load is bit-exact.
nlohmann::json checkpoint_to_json(const ParamList& params, const nlohmann::json& meta);

/// Copies tensors into `params` by name. Every parameter must be present with
/// the same shape; extra tensors in the document are an error too.
void load_checkpoint_json(const nlohmann::json& doc, const ParamList& params);

void write_checkpoint(const std::filesystem::path& path, const ParamList& params,
                      const nlohmann::json& meta);
nlohmann::json read_checkpoint(const std::filesystem::path& path);

}  // namespace riskcast
