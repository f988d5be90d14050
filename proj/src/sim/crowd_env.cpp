#include "sim/crowd_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sim/json_types.hpp"

namespace crowdnav {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Humans keep a small placement buffer to geometry and to each other so
// nobody starts an episode already in the discomfort band.
constexpr double kPlacementBuffer = 0.05;
constexpr double kHumanSpacing = 0.1;
constexpr double kRobotSpacing = 0.2;

// Stuck detection: a dynamic human that moves less than kStuckDisplacement
// per step for more than kStuckSteps consecutive steps while still
// kStuckGoalDistance away from its goal gets a fresh goal.
constexpr double kStuckDisplacement = 0.005;
constexpr int kStuckSteps = 10;
constexpr double kStuckGoalDistance = 0.5;

}  // namespace

const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::Running: return "Running";
    case TerminationReason::Goal: return "Goal";
    case TerminationReason::HumanCollision: return "HumanCollision";
    case TerminationReason::ObstacleCollision: return "ObstacleCollision";
    case TerminationReason::Timeout: return "Timeout";
  }
  return "Running";
}

TerminationReason termination_from_string(const std::string& s) {
  if (s == "Running") return TerminationReason::Running;
  if (s == "Goal") return TerminationReason::Goal;
  if (s == "HumanCollision") return TerminationReason::HumanCollision;
  if (s == "ObstacleCollision") return TerminationReason::ObstacleCollision;
  if (s == "Timeout") return TerminationReason::Timeout;
  throw std::invalid_argument("unknown termination reason: " + s);
}

Vec2 RobotState::velocity() const {
  return {v * std::cos(heading), v * std::sin(heading)};
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("EnvConfig: " + what);
  };
  if (n_humans_lo < 0 || n_humans_hi < n_humans_lo) fail("n_humans range is invalid");
  if (n_obstacles_lo < 0 || n_obstacles_hi < n_obstacles_lo) fail("n_obstacles range is invalid");
  if (arena_half_extent <= 0.0) fail("arena_half_extent must be positive");
  if (n_max <= 0) fail("n_max must be positive");
  if (n_humans_hi > n_max) fail("n_humans_hi exceeds n_max observation slots");
  if (beams <= 0) fail("beams must be positive");
  if (max_range <= 0.0) fail("max_range must be positive");
  if (sensor_range <= 0.0) fail("sensor_range must be positive");
  if (robot_radius <= 0.0) fail("robot_radius must be positive");
  if (human_radius <= 0.0) fail("human_radius must be positive");
  if (dt <= 0.0) fail("dt must be positive");
  if (max_steps <= 0) fail("max_steps must be positive");
  if (start_goal_lo <= 0.0 || start_goal_hi < start_goal_lo) fail("start_goal range is invalid");
  if (v_max <= 0.0) fail("v_max must be positive");
  if (omega_max <= 0.0) fail("omega_max must be positive");
  if (pref_speed_lo <= 0.0 || pref_speed_hi < pref_speed_lo) fail("pref_speed range is invalid");
  if (nonreactive_fraction < 0.0 || nonreactive_fraction > 1.0)
    fail("nonreactive_fraction must be in [0, 1]");
  if (static_humans_max < 0) fail("static_humans_max must be non-negative");
  if (scan_noise_std < 0.0) fail("scan_noise_std must be non-negative");
  // The start-goal distance has to fit inside the walls with margin to spare.
  double lim = arena_half_extent - robot_radius - kRobotSpacing;
  if (start_goal_lo > 2.0 * lim * std::numbers::sqrt2)
    fail("start_goal_lo cannot fit inside the arena");
}

RewardBreakdown compute_reward(const RewardInputs& in) {
  RewardBreakdown out;
  if (in.reached_goal) {
    out.r_main = 20.0;
  } else if (in.collided || in.d_min <= 0.0) {
    out.r_main = -20.0;
  } else if (in.d_min < 0.25) {
    out.r_main = in.d_min - 0.25;
  } else {
    out.r_main = 4.0 * (in.d_goal_prev - in.d_goal);
  }
  out.r_spin = -0.05 * in.omega * in.omega;
  out.r_time = -0.025;
  return out;
}

CrowdEnv::CrowdEnv(EnvConfig cfg, uint64_t stream_seed)
    : cfg_(std::move(cfg)), stream_rng_(stream_seed) {
  cfg_.validate();
}

Observation CrowdEnv::reset() { return reset_seeded(stream_rng_.next_u64()); }

Observation CrowdEnv::reset_seeded(uint64_t episode_seed) {
  episode_seed_ = episode_seed;
  episode_rng_ = Rng(episode_seed);
  step_index_ = 0;
  active_ = true;

  const int n_humans = episode_rng_.uniform_int(cfg_.n_humans_lo, cfg_.n_humans_hi);
  const int n_obstacles = episode_rng_.uniform_int(cfg_.n_obstacles_lo, cfg_.n_obstacles_hi);

  // Start and goal first, then the scene is sampled around them, so the pair
  // is never buried in geometry.
  const double lim = cfg_.arena_half_extent - cfg_.robot_radius - kRobotSpacing;
  Vec2 start, goal;
  bool placed = false;
  for (int t = 0; t < 1000 && !placed; ++t) {
    start = {episode_rng_.uniform(-lim, lim), episode_rng_.uniform(-lim, lim)};
    double ang = episode_rng_.uniform(-kPi, kPi);
    double d = episode_rng_.uniform(cfg_.start_goal_lo, cfg_.start_goal_hi);
    goal = start + Vec2{d * std::cos(ang), d * std::sin(ang)};
    placed = std::abs(goal.x) <= lim && std::abs(goal.y) <= lim;
  }
  if (!placed) {
    throw std::runtime_error("CrowdEnv: could not place start/goal (seed " +
                             std::to_string(episode_seed) + ")");
  }

  robot_ = RobotState{};
  robot_.radius = cfg_.robot_radius;
  robot_.position = start;
  robot_.goal = goal;
  robot_.heading = episode_rng_.uniform(-kPi, kPi);

  SceneSampleParams sp;
  sp.arena_half_extent = cfg_.arena_half_extent;
  std::vector<KeepOutDisc> keep_out = {{start, 0.5}, {goal, 0.5}};
  scene_ = sample_scene(splitmix64(episode_seed ^ 0x9e3779b97f4a7c15ULL), n_obstacles,
                        keep_out, sp);

  place_agents(n_humans);

  Observation obs = observe();
  apply_scan_noise(&obs);
  return obs;
}

void CrowdEnv::reset_to(const Scene& scene, const RobotState& robot,
                        const std::vector<HumanState>& humans, uint64_t episode_seed) {
  scene_ = scene;
  robot_ = robot;
  humans_ = humans;
  episode_seed_ = episode_seed;
  episode_rng_ = Rng(episode_seed);
  step_index_ = 0;
  active_ = true;
}

Vec2 CrowdEnv::sample_free_point(double radius, double margin, int max_tries) {
  const double lim = cfg_.arena_half_extent - radius - margin;
  for (int t = 0; t < max_tries; ++t) {
    Vec2 p = {episode_rng_.uniform(-lim, lim), episode_rng_.uniform(-lim, lim)};
    if (min_clearance(scene_, p, radius) > 0.0) return p;
  }
  throw std::runtime_error("CrowdEnv: no free point found (seed " +
                           std::to_string(episode_seed_) + ")");
}

Vec2 CrowdEnv::sample_human_goal(Vec2 from, int max_tries) {
  // Circle-crossing style: aim for the mirrored position, with enough noise
  // that paths cross at varied angles. Falls back to any free point.
  const double lim = cfg_.arena_half_extent - cfg_.human_radius - kHumanSpacing;
  for (int t = 0; t < max_tries; ++t) {
    double ang = episode_rng_.uniform(-kPi, kPi);
    double r = 1.5 * std::sqrt(episode_rng_.uniform01());
    Vec2 cand = -from + Vec2{r * std::cos(ang), r * std::sin(ang)};
    if (std::abs(cand.x) > lim || std::abs(cand.y) > lim) continue;
    if (min_clearance(scene_, cand, cfg_.human_radius) <= 0.0) continue;
    return cand;
  }
  return sample_free_point(cfg_.human_radius, kHumanSpacing, 300);
}

void CrowdEnv::place_agents(int n_humans) {
  humans_.clear();
  humans_.reserve(n_humans);

  const int n_static =
      episode_rng_.uniform_int(0, std::min(cfg_.static_humans_max, n_humans));
  const double lim = cfg_.arena_half_extent - cfg_.human_radius - kHumanSpacing;

  for (int i = 0; i < n_humans; ++i) {
    HumanState h;
    h.radius = cfg_.human_radius;
    h.pref_speed = episode_rng_.uniform(cfg_.pref_speed_lo, cfg_.pref_speed_hi);
    h.static_agent = i < n_static;

    bool ok = false;
    for (int t = 0; t < 300 && !ok; ++t) {
      Vec2 p = {episode_rng_.uniform(-lim, lim), episode_rng_.uniform(-lim, lim)};
      if (min_clearance(scene_, p, h.radius) <= kPlacementBuffer) continue;
      if (distance(p, robot_.position) < h.radius + robot_.radius + kRobotSpacing) continue;
      bool clash = false;
      for (const HumanState& other : humans_) {
        if (distance(p, other.position) < h.radius + other.radius + kHumanSpacing) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      h.position = p;
      ok = true;
    }
    if (!ok) {
      throw std::runtime_error("CrowdEnv: could not place human " + std::to_string(i) +
                               " (seed " + std::to_string(episode_seed_) + ")");
    }

    h.goal = h.static_agent ? h.position : sample_human_goal(h.position, 100);
    humans_.push_back(h);
  }

  // Most of the crowd ignores the robot; a shuffled minority yields to it.
  std::vector<int> dynamic;
  for (int i = 0; i < n_humans; ++i)
    if (!humans_[i].static_agent) dynamic.push_back(i);
  for (int i = static_cast<int>(dynamic.size()) - 1; i > 0; --i) {
    int j = episode_rng_.uniform_int(0, i);
    std::swap(dynamic[i], dynamic[j]);
  }
  const int n_nonreactive =
      static_cast<int>(std::lround(cfg_.nonreactive_fraction * dynamic.size()));
  for (int k = 0; k < static_cast<int>(dynamic.size()); ++k)
    humans_[dynamic[k]].reactive = k >= n_nonreactive;
}

std::vector<Segment> CrowdEnv::orca_segments() const {
  std::vector<Segment> segs;
  segs.reserve(4 + 4 * scene_.obstacles.size());
  for (const Segment& w : scene_.wall_segments()) segs.push_back(w);
  for (const OrientedRect& r : scene_.obstacles) {
    auto c = r.corners();
    for (int i = 0; i < 4; ++i) segs.push_back({c[i], c[(i + 1) % 4]});
  }
  return segs;
}

double CrowdEnv::min_separation_to_humans(int* nearest) const {
  double best = kInf;
  int best_i = -1;
  for (int i = 0; i < static_cast<int>(humans_.size()); ++i) {
    double d = distance(robot_.position, humans_[i].position) - robot_.radius -
               humans_[i].radius;
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  if (nearest) *nearest = best_i;
  return best;
}

std::pair<Observation, StepOutcome> CrowdEnv::step(int action_index) {
  if (!active_) throw std::logic_error("CrowdEnv::step on a finished episode");
  if (action_index < 0 || action_index >= Action::kCount)
    throw std::out_of_range("CrowdEnv::step: action index " + std::to_string(action_index));

  // All ORCA decisions read the pre-move world, so the crowd moves
  // simultaneously rather than in agent order.
  OrcaParams orca = cfg_.orca;
  orca.dt = cfg_.dt;
  const std::vector<Segment> segs = orca_segments();
  std::vector<Vec2> next_vel(humans_.size(), Vec2{0.0, 0.0});
  for (size_t i = 0; i < humans_.size(); ++i) {
    const HumanState& h = humans_[i];
    if (h.static_agent) continue;
    OrcaAgent self{h.position, h.velocity, h.radius};
    std::vector<OrcaAgent> neighbors;
    neighbors.reserve(humans_.size());
    for (size_t j = 0; j < humans_.size(); ++j) {
      if (j == i) continue;
      neighbors.push_back({humans_[j].position, humans_[j].velocity, humans_[j].radius});
    }
    if (h.reactive)
      neighbors.push_back({robot_.position, robot_.velocity(), robot_.radius});
    Vec2 pref = pref_velocity(h.position, h.goal, h.pref_speed, cfg_.dt);
    next_vel[i] = orca_velocity(self, pref, h.pref_speed, neighbors, segs, orca);
  }

  // Robot kinematics: speed increments, clip, turn, then move along the new
  // heading.
  const Vec2 prev_pos = robot_.position;
  const double d_goal_prev = distance(prev_pos, robot_.goal);
  Action a{action_index};
  double dv = a.a_trans();
  double dw = a.a_rot();
  if (!cfg_.accel_per_step) {
    dv *= cfg_.dt;
    dw *= cfg_.dt;
  }
  robot_.v = std::clamp(robot_.v + dv, -cfg_.v_max, cfg_.v_max);
  robot_.omega = std::clamp(robot_.omega + dw, -cfg_.omega_max, cfg_.omega_max);
  robot_.heading = wrap_angle(robot_.heading + robot_.omega * cfg_.dt);
  robot_.position += robot_.velocity() * cfg_.dt;

  StepOutcome out;
  for (size_t i = 0; i < humans_.size(); ++i) {
    HumanState& h = humans_[i];
    if (h.static_agent) continue;
    h.velocity = next_vel[i];
    h.position += h.velocity * cfg_.dt;

    bool resample = false;
    double to_goal = distance(h.position, h.goal);
    if (to_goal < h.radius) {
      resample = true;  // arrived; keep the crowd moving
    } else if (norm(h.velocity) * cfg_.dt < kStuckDisplacement &&
               to_goal > kStuckGoalDistance) {
      if (++h.stuck_counter > kStuckSteps) resample = true;
    } else {
      h.stuck_counter = 0;
    }
    if (resample) {
      h.goal = sample_free_point(h.radius, kHumanSpacing, 300);
      h.stuck_counter = 0;
      out.resampled_goal_humans.push_back(static_cast<int>(i));
    }
  }

  ++step_index_;

  int nearest = -1;
  const double sep_humans = min_separation_to_humans(&nearest);
  const double clear_obstacles = min_clearance(scene_, robot_.position, robot_.radius);
  const double d_min = std::min(sep_humans, clear_obstacles);
  const double d_goal = distance(robot_.position, robot_.goal);
  const bool reached = d_goal <= robot_.radius;
  const bool hit_human = sep_humans <= 0.0;
  // Swept test so a fast robot cannot tunnel through a thin obstacle between
  // samples.
  const bool hit_obstacle = segment_hits_scene(scene_, prev_pos, robot_.position,
                                               robot_.radius);

  RewardInputs rin;
  rin.d_goal_prev = d_goal_prev;
  rin.d_goal = d_goal;
  rin.d_min = d_min;
  rin.omega = robot_.omega;
  rin.reached_goal = reached;
  rin.collided = hit_human || hit_obstacle;
  const RewardBreakdown rb = compute_reward(rin);

  out.reward = rb.total();
  out.r_main = rb.r_main;
  out.r_spin = rb.r_spin;
  out.r_time = rb.r_time;
  out.d_min = d_min;
  out.d_goal = d_goal;
  out.step_index = step_index_;

  if (reached) {
    out.terminal = true;
    out.reason = TerminationReason::Goal;
  } else if (hit_human) {
    out.terminal = true;
    out.reason = TerminationReason::HumanCollision;
    out.collided_human = nearest;
  } else if (hit_obstacle) {
    out.terminal = true;
    out.reason = TerminationReason::ObstacleCollision;
  } else if (step_index_ >= cfg_.max_steps) {
    out.terminal = true;
    out.reason = TerminationReason::Timeout;
  }
  active_ = !out.terminal;

  Observation obs = observe();
  apply_scan_noise(&obs);
  return {std::move(obs), std::move(out)};
}

Observation CrowdEnv::observe() const {
  Observation o;
  const Vec2 u = robot_.velocity();
  o.robot = {robot_.position.x, robot_.position.y, u.x,           u.y,
             robot_.goal.x,     robot_.goal.y,     robot_.heading};
  o.scan_max_range = cfg_.max_range;
  o.humans.assign(cfg_.n_max, {0.0, 0.0, 0.0, 0.0});
  o.visibility.assign(cfg_.n_max, 0);

  std::vector<std::pair<double, int>> visible;  // (distance, index), sorts nearest-first
  for (int i = 0; i < static_cast<int>(humans_.size()); ++i) {
    double d = distance(robot_.position, humans_[i].position);
    if (d <= cfg_.sensor_range) visible.emplace_back(d, i);
  }
  std::sort(visible.begin(), visible.end());
  o.n_visible = std::min(static_cast<int>(visible.size()), cfg_.n_max);
  for (int k = 0; k < o.n_visible; ++k) {
    const HumanState& h = humans_[visible[k].second];
    o.humans[k] = {h.position.x, h.position.y, h.velocity.x, h.velocity.y};
    o.visibility[k] = 1;
  }

  o.scan = raycast(scene_, robot_.position, robot_.heading, cfg_.beams, cfg_.max_range);
  return o;
}

void CrowdEnv::apply_scan_noise(Observation* obs) {
  if (cfg_.scan_noise_std <= 0.0) return;
  for (double& d : obs->scan) {
    d = std::clamp(d + episode_rng_.normal(0.0, cfg_.scan_noise_std), 0.0, cfg_.max_range);
  }
}

std::string CrowdEnv::serialize_state() const {
  nlohmann::json j;
  j["version"] = 1;
  j["stream_rng"] = stream_rng_.state_string();
  j["episode_rng"] = episode_rng_.state_string();
  j["episode_seed"] = episode_seed_;
  j["step_index"] = step_index_;
  j["active"] = active_;
  j["scene"] = scene_;
  j["robot"] = robot_;
  j["humans"] = humans_;
  return j.dump();
}

void CrowdEnv::restore_state(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("CrowdEnv: unsupported state version");
  stream_rng_.set_state_string(j.at("stream_rng").get<std::string>());
  episode_rng_.set_state_string(j.at("episode_rng").get<std::string>());
  episode_seed_ = j.at("episode_seed").get<uint64_t>();
  step_index_ = j.at("step_index").get<int>();
  active_ = j.at("active").get<bool>();
  j.at("scene").get_to(scene_);
  j.at("robot").get_to(robot_);
  j.at("humans").get_to(humans_);
}

}  // namespace crowdnav
