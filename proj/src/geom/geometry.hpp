#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "util/rng.hpp"

namespace crowdnav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
// z-component of the 3-D cross product; > 0 when b lies to the left of a.
inline double det(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a);
double norm_sq(Vec2 a);
double distance(Vec2 a, Vec2 b);
Vec2 normalized(Vec2 a);  // zero vector stays zero
Vec2 rotated(Vec2 a, double angle);
double wrap_angle(double a);  // into [-pi, pi)

struct Segment {
  Vec2 a, b;
};

double point_segment_distance(Vec2 p, Segment s);
double segment_segment_distance(Segment s, Segment t);

// Axis-aligned in its own frame: local x spans [-half_w, half_w], local y
// spans [-half_l, half_l]; `rot` maps local to world.
struct OrientedRect {
  Vec2 center;
  double half_w = 0.0;
  double half_l = 0.0;
  double rot = 0.0;

  Vec2 to_local(Vec2 world) const;
  Vec2 to_world(Vec2 local) const;
  bool contains(Vec2 p) const;
  // Negative inside, zero on the boundary, positive outside. |value| is the
  // exact Euclidean distance to the boundary.
  double signed_distance(Vec2 p) const;
  std::array<Vec2, 4> corners() const;
};

struct Scene {
  double arena_half_extent = 6.0;
  std::vector<OrientedRect> obstacles;

  // The four arena walls as segments, counterclockwise from the bottom edge.
  std::array<Segment, 4> wall_segments() const;
  // Positive inside the arena; |value| is the distance to the nearest wall.
  double arena_signed_distance(Vec2 p) const;
  bool point_blocked(Vec2 p) const;  // inside any obstacle or outside walls
};

struct KeepOutDisc {
  Vec2 center;
  double radius = 0.0;
};

struct SceneSampleParams {
  double arena_half_extent = 6.0;
  double side_mean = 1.0;     // obstacle side lengths, metres
  double side_stddev = 0.6;
  double side_min = 0.1;
  double side_max = 5.0;
  int retries_per_obstacle = 100;
};

// Draws `n_obstacles` rectangles with clamped-normal side lengths, uniform
// centers and rotations, rejecting any rectangle that intrudes on a keep-out
// disc. After the retry budget the rectangle is retried once more with halved
// sides; if that also fails we give up and report the seed.
Scene sample_scene(uint64_t seed, int n_obstacles,
                   const std::vector<KeepOutDisc>& keep_out,
                   const SceneSampleParams& params = {});

// First intersection of a ray with obstacle or wall geometry, clamped to
// max_range. A ray starting inside an obstacle reports 0.
double raycast_single(const Scene& scene, Vec2 origin, double angle,
                      double max_range);

// K beams at robot-frame angles 2*pi*i/K, i = 0..K-1, world angle =
// heading + beam angle. Values in (0, max_range].
std::vector<double> raycast(const Scene& scene, Vec2 origin, double heading,
                            int k_beams, double max_range);

// Distance from a disc of the given radius to the nearest obstacle or wall
// boundary. Negative exactly when the disc penetrates geometry.
double min_clearance(const Scene& scene, Vec2 p, double radius);

// True when a disc swept from a to b touches or penetrates geometry.
bool segment_hits_scene(const Scene& scene, Vec2 a, Vec2 b, double radius);

}  // namespace crowdnav
