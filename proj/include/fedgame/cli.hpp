// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedgame/config.hpp"

namespace fedgame::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

inline constexpr const char* kOutputDirEnv = "FEDGAME_OUTPUT_DIR";

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> threads;
  std::optional<std::size_t> rounds;
  bool reverse_client_order = false;
  bool quiet = false;
};

/// Loads the config and applies overrides: flag > environment > file.
ExperimentConfig resolve_config(const std::filesystem::path& config_path, const RunOverrides& overrides);

int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err);

/// Same data and seeds under every baseline kind; writes ablation.csv (median over
/// seeds) and ablation_runs.csv. An empty `seeds` means the config seed only.
int cmd_ablate(const std::filesystem::path& config_path, const RunOverrides& overrides,
               const std::vector<std::uint64_t>& seeds, std::ostream& out, std::ostream& err);

struct CommOverrides {
  std::optional<std::size_t> clients;
  std::optional<std::size_t> total_params;
  std::optional<std::size_t> head_params;
  std::optional<std::string> kind;
};

int cmd_comm(const std::filesystem::path& config_path, const CommOverrides& overrides, std::ostream& out,
             std::ostream& err);

struct SynthOptions {
  std::size_t clients = 8;
  std::size_t clusters = 2;
  std::size_t length = 720;
  double noise_sd = 0.3;
  std::uint64_t seed = 0;
  std::string output;  // empty: stdout
};

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

/// Argument parsing and dispatch for the `fedgame` executable.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace fedgame::cli
