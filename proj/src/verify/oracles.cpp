#include "verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowdnav {

double raycast_stepping_oracle(const Scene& scene, Vec2 origin, double angle,
                               double max_range, double step) {
  const Vec2 dir{std::cos(angle), std::sin(angle)};
  for (double t = 0.0; t <= max_range; t += step) {
    if (scene.point_blocked(origin + dir * t)) return t;
  }
  return max_range;
}

namespace {

double min_distance_to_sampled_segment(Vec2 p, Vec2 a, Vec2 b, double step) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  double best = distance(p, a);
  for (int i = 1; i <= n; ++i) {
    const Vec2 q = a + (b - a) * (static_cast<double>(i) / n);
    best = std::min(best, distance(p, q));
  }
  return best;
}

}  // namespace

double clearance_sampling_oracle(const Scene& scene, Vec2 p, double radius,
                                 double boundary_step) {
  // Per-object signed distances so overlapping geometry keeps the invariant
  // "negative exactly when penetrating": sign from containment, magnitude
  // from that object's own sampled boundary.
  double sd = std::numeric_limits<double>::infinity();
  for (const auto& r : scene.obstacles) {
    const auto c = r.corners();
    double boundary = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i)
      boundary = std::min(boundary, min_distance_to_sampled_segment(
                                        p, c[i], c[(i + 1) % 4], boundary_step));
    sd = std::min(sd, r.contains(p) ? -boundary : boundary);
  }
  double wall = std::numeric_limits<double>::infinity();
  for (const auto& w : scene.wall_segments())
    wall = std::min(wall,
                    min_distance_to_sampled_segment(p, w.a, w.b, boundary_step));
  const bool inside_arena = std::max(std::abs(p.x), std::abs(p.y)) <
                            scene.arena_half_extent;
  sd = std::min(sd, inside_arena ? wall : -wall);
  return sd - radius;
}

bool segment_sweep_oracle(const Scene& scene, Vec2 a, Vec2 b, double radius,
                          double step) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const Vec2 q = a + (b - a) * (static_cast<double>(i) / n);
    if (min_clearance(scene, q, radius) <= 0.0) return true;
  }
  return false;
}

}  // namespace crowdnav
