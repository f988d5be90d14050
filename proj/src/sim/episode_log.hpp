#pragma once

// Episode logs: one JSON object per line. First line is a header with the
// config, seed, scene, and initial agent states; then one line per step; the
// last line summarizes the outcome. The format is versioned and readers
// refuse versions they do not understand, so old tooling fails loudly
// instead of misreading new fields.

#include <iosfwd>
#include <string>
#include <vector>

#include "sim/crowd_env.hpp"

namespace crowdnav {

struct StepRecord {
  int action = 4;
  double reward = 0.0;
  double r_main = 0.0, r_spin = 0.0, r_time = 0.0;
  double d_min = 0.0, d_goal = 0.0;
  RobotState robot;                 // post-step
  std::vector<HumanState> humans;   // post-step
  std::vector<int> resampled;       // humans whose goals were redrawn
  std::string reason = "Running";

  // Present when the policy exports attention weights for this step.
  bool has_attention = false;
  std::vector<double> rh_attn;               // one weight per human slot
  std::vector<std::vector<double>> hh_attn;  // rows x cols over human slots
};

struct EpisodeLog {
  static constexpr int kVersion = 1;

  int version = kVersion;
  uint64_t episode_seed = 0;
  EnvConfig config;
  Scene scene;
  RobotState robot0;
  std::vector<HumanState> humans0;
  std::vector<StepRecord> steps;
  std::string final_reason = "Running";
};

// Captures the header fields from a freshly reset environment.
EpisodeLog begin_episode_log(const CrowdEnv& env);

// Captures one executed step. Attention weights can be attached afterwards.
StepRecord make_step_record(const CrowdEnv& env, int action, const StepOutcome& out);

void write_episode_log(std::ostream& out, const EpisodeLog& log);
void write_episode_log_file(const std::string& path, const EpisodeLog& log);

// Both throw std::runtime_error naming the offending line on corrupt input
// or an unsupported version.
EpisodeLog read_episode_log(std::istream& in);
EpisodeLog read_episode_log_file(const std::string& path);

// Environment reconstructed from (config, episode_seed), exactly as the
// logged episode started.
CrowdEnv make_replay_env(const EpisodeLog& log);

struct ReplayCheck {
  bool bit_exact = true;
  int first_divergent_step = -1;  // -1 when nothing diverged
  std::string detail;
};

// Re-simulates the logged actions from the seed and compares every robot and
// human state field with operator== on doubles.
ReplayCheck check_replay(const EpisodeLog& log);

}  // namespace crowdnav
