#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace crowdnav {

enum class TerminationReason { Running, Goal, HumanCollision, ObstacleCollision, Timeout };

const char* to_string(TerminationReason r);
TerminationReason termination_from_string(const std::string& s);

// Discrete action: per-step increments to translational and rotational speed.
struct Action {
  int index = 4;  // the no-op (0, 0) pair

  static constexpr int kCount = 9;
  double a_trans() const { return kTransDeltas[index / 3]; }
  double a_rot() const { return kRotDeltas[index % 3]; }

  static constexpr double kTransDeltas[3] = {-0.05, 0.0, 0.05};
  static constexpr double kRotDeltas[3] = {-0.1, 0.0, 0.1};
};

struct Observation {
  // px, py, ux, uy, gx, gy, theta with (ux, uy) = v * (cos theta, sin theta)
  std::array<double, 7> robot{};
  // One row per visible human, nearest first, zero rows past n_visible.
  std::vector<std::array<double, 4>> humans;
  std::vector<uint8_t> visibility;
  std::vector<double> scan;  // meters; consumers normalize by scan_max_range
  double scan_max_range = 6.0;
  int n_visible = 0;
};

struct StepOutcome {
  double reward = 0.0;
  bool terminal = false;
  TerminationReason reason = TerminationReason::Running;
  int step_index = 0;

  // Reward components and event details, for logs and tests.
  double r_main = 0.0, r_spin = 0.0, r_time = 0.0;
  double d_min = 0.0, d_goal = 0.0;
  int collided_human = -1;
  std::vector<int> resampled_goal_humans;
};

// What the trainer needs from an environment. CrowdEnv is the real one;
// tests substitute scripted environments through the same seam.
class EnvInterface {
 public:
  EnvInterface() = default;
  EnvInterface(const EnvInterface&) = default;
  EnvInterface& operator=(const EnvInterface&) = default;
  EnvInterface(EnvInterface&&) = default;
  EnvInterface& operator=(EnvInterface&&) = default;
  virtual ~EnvInterface() = default;
  virtual Observation reset() = 0;
  virtual std::pair<Observation, StepOutcome> step(int action_index) = 0;
  // The current observation without advancing time (used after restores).
  virtual Observation observe() const = 0;
  // Full mutable state as structured text, for resumable training.
  virtual std::string serialize_state() const = 0;
  virtual void restore_state(const std::string& text) = 0;
};

}  // namespace crowdnav
