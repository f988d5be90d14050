#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "eval/harness.hpp"
#include "policy/policy.hpp"
#include "rl/ppo.hpp"
#include "sim/crowd_env.hpp"

namespace crowdnav {

// Everything a run needs, with CLI/env-var overrides layered on top of an
// optional config file. The snapshot written next to a run's outputs loads
// back to the identical configuration, so (snapshot, seed) reproduces the
// run bit for bit in single-worker mode.
struct RunConfig {
  static constexpr int kVersion = 1;

  EnvConfig env;
  PolicyConfig policy;
  PPOConfig ppo;
  EvalOptions eval;

  std::string regime = "training-distribution";  // or "all"
  std::string out_dir = "runs/latest";
  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = true;

  // Cross-module consistency on top of the per-module validators: the
  // policy's slot counts must match what the environment emits.
  void validate() const;
};

// Merges `j` onto `cfg`: only the keys present are applied, unknown keys are
// rejected naming the section and key. Sections: env, policy, ppo, eval.
void merge_run_config(const nlohmann::json& j, RunConfig* cfg);

// Reads and merges a config file over the defaults; errors name the file.
RunConfig load_run_config(const std::string& path);

// Full dump: every field, explicitly versioned.
nlohmann::json to_json(const RunConfig& cfg);

// Writes <dir>/config.json (creating the directory) and returns its path.
std::string write_config_snapshot(const RunConfig& cfg, const std::string& dir);

}  // namespace crowdnav
