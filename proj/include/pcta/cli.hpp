#pragma once

#include <cstdint>
#include <string>

#include "pcta/config.hpp"

namespace pcta {

// Subcommand entry points. Exit codes: 0 success, 1 config error, 2 data
// error, 3 check failure.
int cmd_train(const RunConfig& cfg);
int cmd_compare(const RunConfig& cfg);
int cmd_gradcheck(std::uint64_t seed);
int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg);

int run_cli(int argc, const char* const* argv);

}  // namespace pcta
