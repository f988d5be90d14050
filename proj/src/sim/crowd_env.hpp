#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "geom/geometry.hpp"
#include "sim/env_interface.hpp"
#include "sim/orca.hpp"
#include "util/rng.hpp"

namespace crowdnav {

struct RobotState {
  Vec2 position;
  double heading = 0.0;
  double v = 0.0;      // translational speed, m/s
  double omega = 0.0;  // rotational speed, rad/s
  Vec2 goal;
  double radius = 0.3;

  Vec2 velocity() const;  // v * (cos heading, sin heading)
};

struct HumanState {
  Vec2 position;
  Vec2 velocity;
  Vec2 goal;
  double radius = 0.3;
  double pref_speed = 0.5;
  bool reactive = false;
  bool static_agent = false;
  int stuck_counter = 0;
};

struct EnvConfig {
  int n_humans_lo = 5, n_humans_hi = 9;
  int n_obstacles_lo = 8, n_obstacles_hi = 12;
  double arena_half_extent = 6.0;
  int n_max = 20;   // padded human slots in observations
  int beams = 90;   // range-scan resolution
  double max_range = 6.0;
  double sensor_range = 5.0;
  double robot_radius = 0.3;
  double human_radius = 0.3;
  double dt = 0.1;
  int max_steps = 491;
  double start_goal_lo = 5.0, start_goal_hi = 6.0;
  // Action deltas applied directly per step; set false for the literal
  // acceleration-times-dt reading.
  bool accel_per_step = true;
  double v_max = 0.5;
  double omega_max = 1.0;
  double pref_speed_lo = 0.4, pref_speed_hi = 0.6;
  double nonreactive_fraction = 0.8;
  int static_humans_max = 2;
  double scan_noise_std = 0.0;  // hook, disabled by default
  OrcaParams orca;

  void validate() const;  // throws std::invalid_argument naming the field
};

struct RewardInputs {
  double d_goal_prev = 0.0;
  double d_goal = 0.0;
  double d_min = 1.0;  // nearest human disc-to-disc or obstacle clearance
  double omega = 0.0;
  bool reached_goal = false;
  bool collided = false;
};

struct RewardBreakdown {
  double r_main = 0.0, r_spin = 0.0, r_time = 0.0;
  double total() const { return r_main + r_spin + r_time; }
};

// Goal, collision, discomfort band, potential progress, in that priority,
// plus the rotation and time penalties.
RewardBreakdown compute_reward(const RewardInputs& in);

class CrowdEnv : public EnvInterface {
 public:
  // stream_seed drives the sequence of episode seeds produced by reset().
  CrowdEnv(EnvConfig cfg, uint64_t stream_seed);

  Observation reset() override;
  Observation reset_seeded(uint64_t episode_seed);
  std::pair<Observation, StepOutcome> step(int action_index) override;

  std::string serialize_state() const override;
  void restore_state(const std::string& text) override;

  const EnvConfig& config() const { return cfg_; }
  const Scene& scene() const { return scene_; }
  const RobotState& robot() const { return robot_; }
  const std::vector<HumanState>& humans() const { return humans_; }
  int step_index() const { return step_index_; }
  bool episode_active() const { return active_; }
  uint64_t episode_seed() const { return episode_seed_; }
  Observation observe() const override;

  // Test/replay entry: install an exact world state instead of sampling one.
  void reset_to(const Scene& scene, const RobotState& robot,
                const std::vector<HumanState>& humans, uint64_t episode_seed);

 private:
  Vec2 sample_free_point(double radius, double margin, int max_tries);
  Vec2 sample_human_goal(Vec2 from, int max_tries);
  void place_agents(int n_humans);
  void apply_scan_noise(Observation* obs);
  std::vector<Segment> orca_segments() const;
  double min_separation_to_humans(int* nearest) const;

  EnvConfig cfg_;
  Rng stream_rng_;
  Rng episode_rng_;
  uint64_t episode_seed_ = 0;
  Scene scene_;
  RobotState robot_;
  std::vector<HumanState> humans_;
  int step_index_ = 0;
  bool active_ = false;
};

}  // namespace crowdnav
