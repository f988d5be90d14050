#pragma once

#include <vector>

#include "geom/geometry.hpp"

namespace crowdnav {

struct OrcaAgent {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
};

struct OrcaParams {
  double neighbor_dist = 4.0;      // ignore agents farther than this
  double time_horizon = 2.0;       // agent-agent lookahead, seconds
  double time_horizon_obst = 1.0;  // agent-segment lookahead, seconds
  double dt = 0.1;                 // step length; sets the escape rate when
                                   // geometry already overlaps
};

// Feasible velocities are on the left of the directed line through `point`.
struct HalfPlane {
  Vec2 point;
  Vec2 dir;
};

inline bool halfplane_satisfied(const HalfPlane& h, Vec2 v) {
  return det(h.dir, h.point - v) <= 0.0;
}

// Collision-avoidance constraint against a moving disc. Each side takes half
// of the needed velocity change, which is what makes the scheme reciprocal.
HalfPlane orca_halfplane_agent(const OrcaAgent& self, const OrcaAgent& other,
                               const OrcaParams& params);

// Constraint against a static segment, linearized at the nearest point; the
// agent takes the full velocity change. False when the segment is out of
// range.
bool orca_halfplane_segment(const OrcaAgent& self, Segment seg,
                            const OrcaParams& params, HalfPlane* out);

// Velocity closest to pref_vel that satisfies all constraints, or the least
// violating one when the system is infeasible (crowded pockets). Output speed
// never exceeds max_speed.
Vec2 orca_velocity(const OrcaAgent& self, Vec2 pref_vel, double max_speed,
                   const std::vector<OrcaAgent>& neighbors,
                   const std::vector<Segment>& segments,
                   const OrcaParams& params);

// Straight-at-goal preferred velocity, slowing down on final approach so the
// agent parks instead of orbiting the goal point.
Vec2 pref_velocity(Vec2 position, Vec2 goal, double pref_speed, double dt);

}  // namespace crowdnav
