#pragma once

// nlohmann-json adapters for the simulator types that appear in episode logs,
// run configs, and resumable training state.

#include <json.hpp>

#include "sim/crowd_env.hpp"

namespace crowdnav {

inline void to_json(nlohmann::json& j, const Vec2& v) { j = {v.x, v.y}; }
inline void from_json(const nlohmann::json& j, Vec2& v) {
  v.x = j.at(0).get<double>();
  v.y = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const OrientedRect& r) {
  j = {{"center", r.center}, {"half_w", r.half_w}, {"half_l", r.half_l}, {"rot", r.rot}};
}
inline void from_json(const nlohmann::json& j, OrientedRect& r) {
  j.at("center").get_to(r.center);
  j.at("half_w").get_to(r.half_w);
  j.at("half_l").get_to(r.half_l);
  j.at("rot").get_to(r.rot);
}

inline void to_json(nlohmann::json& j, const Scene& s) {
  j = {{"arena_half_extent", s.arena_half_extent}, {"obstacles", s.obstacles}};
}
inline void from_json(const nlohmann::json& j, Scene& s) {
  j.at("arena_half_extent").get_to(s.arena_half_extent);
  j.at("obstacles").get_to(s.obstacles);
}

inline void to_json(nlohmann::json& j, const RobotState& r) {
  j = {{"position", r.position}, {"heading", r.heading}, {"v", r.v},
       {"omega", r.omega},       {"goal", r.goal},       {"radius", r.radius}};
}
inline void from_json(const nlohmann::json& j, RobotState& r) {
  j.at("position").get_to(r.position);
  j.at("heading").get_to(r.heading);
  j.at("v").get_to(r.v);
  j.at("omega").get_to(r.omega);
  j.at("goal").get_to(r.goal);
  j.at("radius").get_to(r.radius);
}

inline void to_json(nlohmann::json& j, const HumanState& h) {
  j = {{"position", h.position},     {"velocity", h.velocity},
       {"goal", h.goal},             {"radius", h.radius},
       {"pref_speed", h.pref_speed}, {"reactive", h.reactive},
       {"static", h.static_agent},   {"stuck", h.stuck_counter}};
}
inline void from_json(const nlohmann::json& j, HumanState& h) {
  j.at("position").get_to(h.position);
  j.at("velocity").get_to(h.velocity);
  j.at("goal").get_to(h.goal);
  j.at("radius").get_to(h.radius);
  j.at("pref_speed").get_to(h.pref_speed);
  j.at("reactive").get_to(h.reactive);
  j.at("static").get_to(h.static_agent);
  j.at("stuck").get_to(h.stuck_counter);
}

inline void to_json(nlohmann::json& j, const OrcaParams& p) {
  j = {{"neighbor_dist", p.neighbor_dist},
       {"time_horizon", p.time_horizon},
       {"time_horizon_obst", p.time_horizon_obst},
       {"dt", p.dt}};
}
inline void from_json(const nlohmann::json& j, OrcaParams& p) {
  j.at("neighbor_dist").get_to(p.neighbor_dist);
  j.at("time_horizon").get_to(p.time_horizon);
  j.at("time_horizon_obst").get_to(p.time_horizon_obst);
  j.at("dt").get_to(p.dt);
}

inline void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"n_humans", {c.n_humans_lo, c.n_humans_hi}},
       {"n_obstacles", {c.n_obstacles_lo, c.n_obstacles_hi}},
       {"arena_half_extent", c.arena_half_extent},
       {"n_max", c.n_max},
       {"beams", c.beams},
       {"max_range", c.max_range},
       {"sensor_range", c.sensor_range},
       {"robot_radius", c.robot_radius},
       {"human_radius", c.human_radius},
       {"dt", c.dt},
       {"max_steps", c.max_steps},
       {"start_goal", {c.start_goal_lo, c.start_goal_hi}},
       {"accel_per_step", c.accel_per_step},
       {"v_max", c.v_max},
       {"omega_max", c.omega_max},
       {"pref_speed", {c.pref_speed_lo, c.pref_speed_hi}},
       {"nonreactive_fraction", c.nonreactive_fraction},
       {"static_humans_max", c.static_humans_max},
       {"scan_noise_std", c.scan_noise_std},
       {"orca", c.orca}};
}
inline void from_json(const nlohmann::json& j, EnvConfig& c) {
  j.at("n_humans").at(0).get_to(c.n_humans_lo);
  j.at("n_humans").at(1).get_to(c.n_humans_hi);
  j.at("n_obstacles").at(0).get_to(c.n_obstacles_lo);
  j.at("n_obstacles").at(1).get_to(c.n_obstacles_hi);
  j.at("arena_half_extent").get_to(c.arena_half_extent);
  j.at("n_max").get_to(c.n_max);
  j.at("beams").get_to(c.beams);
  j.at("max_range").get_to(c.max_range);
  j.at("sensor_range").get_to(c.sensor_range);
  j.at("robot_radius").get_to(c.robot_radius);
  j.at("human_radius").get_to(c.human_radius);
  j.at("dt").get_to(c.dt);
  j.at("max_steps").get_to(c.max_steps);
  j.at("start_goal").at(0).get_to(c.start_goal_lo);
  j.at("start_goal").at(1).get_to(c.start_goal_hi);
  j.at("accel_per_step").get_to(c.accel_per_step);
  j.at("v_max").get_to(c.v_max);
  j.at("omega_max").get_to(c.omega_max);
  j.at("pref_speed").at(0).get_to(c.pref_speed_lo);
  j.at("pref_speed").at(1).get_to(c.pref_speed_hi);
  j.at("nonreactive_fraction").get_to(c.nonreactive_fraction);
  j.at("static_humans_max").get_to(c.static_humans_max);
  j.at("scan_noise_std").get_to(c.scan_noise_std);
  j.at("orca").get_to(c.orca);
}

}  // namespace crowdnav
