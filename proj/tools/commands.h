#pragma once

#include <CLI11.hpp>

namespace rangefuse::cli {

/// Adds every subcommand to `app`. Each subcommand runs from its callback.
void register_commands(CLI::App& app);

}  // namespace rangefuse::cli
