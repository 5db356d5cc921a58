#pragma once

#include <string>
#include <vector>

#include "hardylab/config.hpp"

namespace hardylab::cli {

// Exit codes: 0 pass, 1 numeric failure, 2 config error (raised as ConfigError).
int run_subcommand(const std::string& name, const RunConfig& cfg);

const std::vector<std::string>& subcommands();

}  // namespace hardylab::cli
