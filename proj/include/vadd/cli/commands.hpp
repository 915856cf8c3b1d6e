#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vadd/cli/config.hpp"

namespace vadd::cli {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitNumerical = 3 };

/// Flags shared by all commands; unset flags fall back to the config.
struct CommandOptions {
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<std::string> dataset;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<std::string> truth;
  std::optional<std::string> resume;
  std::optional<std::string> scope;
  std::optional<std::string> out;
  std::vector<int> steps;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> epochs;
  std::optional<int> board;
};

/// Config file (or defaults) with `--threads` applied.
RunConfig base_config(const CommandOptions& opts);

int cmd_gen_data(const CommandOptions& opts);
int cmd_train(const CommandOptions& opts);
int cmd_sample(const CommandOptions& opts);
int cmd_eval(const CommandOptions& opts);
int cmd_oracle(const CommandOptions& opts);

}  // namespace vadd::cli
