#pragma once

#include <ostream>

#include <json.hpp>

namespace riskcast {

/// Every configurable value under its flat dotted key ("seed", "gen.*",
/// "model.*", "train.*", "risk.*") at its default.
nlohmann::json default_run_config();

/// Entry point of the `riskcast` tool. Exit codes: 0 success, 1 bad input
/// (message names the path), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace riskcast
