#pragma once

#include <string>
#include <vector>

namespace hman::cli {

// Expands `--config FILE` (or `--config=FILE`) after the subcommand name into
// ordinary options placed ahead of the command-line ones, so that explicit
// flags win when every option keeps its last value. FILE is a flat JSON
// object keyed by long option names without the leading dashes; booleans
// become flags and arrays repeat the option. Throws ConfigError.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace hman::cli
