#include "geom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace crowdnav {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double norm(Vec2 a) { return std::hypot(a.x, a.y); }
double norm_sq(Vec2 a) { return a.x * a.x + a.y * a.y; }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  if (n == 0.0) return {0.0, 0.0};
  return {a.x / n, a.y / n};
}

Vec2 rotated(Vec2 a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
  // floor rounding can land exactly on pi; fold it back to -pi.
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

double point_segment_distance(Vec2 p, Segment s) {
  const Vec2 e = s.b - s.a;
  const double len_sq = norm_sq(e);
  if (len_sq == 0.0) return distance(p, s.a);
  const double t = std::clamp(dot(p - s.a, e) / len_sq, 0.0, 1.0);
  return distance(p, s.a + e * t);
}

namespace {

bool segments_intersect(Segment s, Segment t) {
  const Vec2 d1 = s.b - s.a, d2 = t.b - t.a;
  const double denom = det(d1, d2);
  const Vec2 w = t.a - s.a;
  if (denom == 0.0) {
    // Parallel: overlapping collinear segments still count as touching.
    if (det(w, d1) != 0.0) return false;
    const double len_sq = norm_sq(d1);
    if (len_sq == 0.0) return norm_sq(w) == 0.0;
    const double u0 = dot(w, d1) / len_sq;
    const double u1 = dot(t.b - s.a, d1) / len_sq;
    return std::max(std::min(u0, u1), 0.0) <= std::min(std::max(u0, u1), 1.0);
  }
  const double u = det(w, d2) / denom;
  const double v = det(w, d1) / denom;
  return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
}

}  // namespace

double segment_segment_distance(Segment s, Segment t) {
  if (segments_intersect(s, t)) return 0.0;
  return std::min(std::min(point_segment_distance(s.a, t),
                           point_segment_distance(s.b, t)),
                  std::min(point_segment_distance(t.a, s),
                           point_segment_distance(t.b, s)));
}

Vec2 OrientedRect::to_local(Vec2 world) const {
  return rotated(world - center, -rot);
}

Vec2 OrientedRect::to_world(Vec2 local) const {
  return center + rotated(local, rot);
}

bool OrientedRect::contains(Vec2 p) const {
  const Vec2 l = to_local(p);
  return std::abs(l.x) <= half_w && std::abs(l.y) <= half_l;
}

double OrientedRect::signed_distance(Vec2 p) const {
  const Vec2 l = to_local(p);
  const double qx = std::abs(l.x) - half_w;
  const double qy = std::abs(l.y) - half_l;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  const double inside = std::min(std::max(qx, qy), 0.0);
  return outside + inside;
}

std::array<Vec2, 4> OrientedRect::corners() const {
  return {to_world({half_w, half_l}), to_world({-half_w, half_l}),
          to_world({-half_w, -half_l}), to_world({half_w, -half_l})};
}

std::array<Segment, 4> Scene::wall_segments() const {
  const double h = arena_half_extent;
  return {Segment{{-h, -h}, {h, -h}}, Segment{{h, -h}, {h, h}},
          Segment{{h, h}, {-h, h}}, Segment{{-h, h}, {-h, -h}}};
}

double Scene::arena_signed_distance(Vec2 p) const {
  const double qx = std::abs(p.x) - arena_half_extent;
  const double qy = std::abs(p.y) - arena_half_extent;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  const double inside = std::min(std::max(qx, qy), 0.0);
  return -(outside + inside);
}

bool Scene::point_blocked(Vec2 p) const {
  if (arena_signed_distance(p) <= 0.0) return true;
  for (const auto& r : obstacles)
    if (r.contains(p)) return true;
  return false;
}

Scene sample_scene(uint64_t seed, int n_obstacles,
                   const std::vector<KeepOutDisc>& keep_out,
                   const SceneSampleParams& params) {
  if (n_obstacles < 0) throw std::invalid_argument("sample_scene: n_obstacles < 0");
  Rng rng(seed);
  Scene scene;
  scene.arena_half_extent = params.arena_half_extent;
  scene.obstacles.reserve(static_cast<size_t>(n_obstacles));

  auto inside_arena = [&](const OrientedRect& r) {
    for (const Vec2 c : r.corners())
      if (std::max(std::abs(c.x), std::abs(c.y)) > params.arena_half_extent)
        return false;
    return true;
  };
  auto clear_of_keep_out = [&](const OrientedRect& r) {
    for (const auto& ko : keep_out)
      if (r.signed_distance(ko.center) < ko.radius) return false;
    return true;
  };

  for (int i = 0; i < n_obstacles; ++i) {
    bool placed = false;
    // Two passes: full-size draws, then halved sides as a fallback for
    // crowded keep-out layouts.
    for (int pass = 0; pass < 2 && !placed; ++pass) {
      const double shrink = pass == 0 ? 1.0 : 0.5;
      for (int attempt = 0; attempt < params.retries_per_obstacle; ++attempt) {
        const double w = std::clamp(rng.normal(params.side_mean, params.side_stddev),
                                    params.side_min, params.side_max) * shrink;
        const double l = std::clamp(rng.normal(params.side_mean, params.side_stddev),
                                    params.side_min, params.side_max) * shrink;
        OrientedRect r;
        r.half_w = 0.5 * w;
        r.half_l = 0.5 * l;
        r.center.x = rng.uniform(-params.arena_half_extent, params.arena_half_extent);
        r.center.y = rng.uniform(-params.arena_half_extent, params.arena_half_extent);
        r.rot = rng.uniform(-std::numbers::pi, std::numbers::pi);
        if (inside_arena(r) && clear_of_keep_out(r)) {
          scene.obstacles.push_back(r);
          placed = true;
          break;
        }
      }
    }
    if (!placed)
      throw std::runtime_error("sample_scene: could not place obstacle " +
                               std::to_string(i) + " (seed " +
                               std::to_string(seed) + ")");
  }
  return scene;
}

namespace {

// Ray/slab parameters against an axis-aligned box in the rectangle's local
// frame. Returns false on a miss; otherwise t is the entry distance (0 when
// the origin starts inside).
bool ray_aabb(Vec2 o, Vec2 d, double hw, double hl, double* t) {
  double tmin = -kInf, tmax = kInf;
  const double lo[2] = {-hw, -hl}, hi[2] = {hw, hl};
  const double oc[2] = {o.x, o.y}, dc[2] = {d.x, d.y};
  for (int ax = 0; ax < 2; ++ax) {
    if (dc[ax] == 0.0) {
      if (oc[ax] < lo[ax] || oc[ax] > hi[ax]) return false;
    } else {
      double t1 = (lo[ax] - oc[ax]) / dc[ax];
      double t2 = (hi[ax] - oc[ax]) / dc[ax];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
    }
  }
  if (tmax < tmin || tmax < 0.0) return false;
  *t = std::max(tmin, 0.0);
  return true;
}

bool ray_segment(Vec2 o, Vec2 d, Segment s, double* t) {
  const Vec2 e = s.b - s.a;
  const double denom = det(d, e);
  if (denom == 0.0) return false;  // parallel rays are caught by other walls
  const Vec2 w = s.a - o;
  const double tt = det(w, e) / denom;
  const double ss = det(w, d) / denom;
  if (tt < 0.0 || ss < 0.0 || ss > 1.0) return false;
  *t = tt;
  return true;
}

}  // namespace

double raycast_single(const Scene& scene, Vec2 origin, double angle,
                      double max_range) {
  const Vec2 dir{std::cos(angle), std::sin(angle)};
  double best = max_range;
  for (const auto& r : scene.obstacles) {
    const Vec2 o = r.to_local(origin);
    const Vec2 d = rotated(dir, -r.rot);
    double t;
    if (ray_aabb(o, d, r.half_w, r.half_l, &t)) best = std::min(best, t);
  }
  for (const auto& wall : scene.wall_segments()) {
    double t;
    if (ray_segment(origin, dir, wall, &t)) best = std::min(best, t);
  }
  return best;
}

std::vector<double> raycast(const Scene& scene, Vec2 origin, double heading,
                            int k_beams, double max_range) {
  if (k_beams <= 0) throw std::invalid_argument("raycast: k_beams <= 0");
  std::vector<double> out(static_cast<size_t>(k_beams));
  for (int i = 0; i < k_beams; ++i) {
    const double a = heading + 2.0 * std::numbers::pi * i / k_beams;
    out[static_cast<size_t>(i)] = raycast_single(scene, origin, a, max_range);
  }
  return out;
}

double min_clearance(const Scene& scene, Vec2 p, double radius) {
  double sd = scene.arena_signed_distance(p);
  for (const auto& r : scene.obstacles) sd = std::min(sd, r.signed_distance(p));
  return sd - radius;
}

namespace {

// Segment clipped against an axis-aligned box, in the box frame.
bool segment_intersects_aabb(Vec2 a, Vec2 b, double hw, double hl) {
  const Vec2 d = b - a;
  double smin = 0.0, smax = 1.0;
  const double lo[2] = {-hw, -hl}, hi[2] = {hw, hl};
  const double ac[2] = {a.x, a.y}, dc[2] = {d.x, d.y};
  for (int ax = 0; ax < 2; ++ax) {
    if (dc[ax] == 0.0) {
      if (ac[ax] < lo[ax] || ac[ax] > hi[ax]) return false;
    } else {
      double s1 = (lo[ax] - ac[ax]) / dc[ax];
      double s2 = (hi[ax] - ac[ax]) / dc[ax];
      if (s1 > s2) std::swap(s1, s2);
      smin = std::max(smin, s1);
      smax = std::min(smax, s2);
    }
  }
  return smax >= smin;
}

double segment_rect_distance(const OrientedRect& r, Vec2 a, Vec2 b) {
  const Vec2 la = r.to_local(a), lb = r.to_local(b);
  if (segment_intersects_aabb(la, lb, r.half_w, r.half_l)) return 0.0;
  const Vec2 c0{r.half_w, r.half_l}, c1{-r.half_w, r.half_l},
      c2{-r.half_w, -r.half_l}, c3{r.half_w, -r.half_l};
  const Segment seg{la, lb};
  double best = kInf;
  for (const Segment edge : {Segment{c0, c1}, Segment{c1, c2}, Segment{c2, c3},
                             Segment{c3, c0}})
    best = std::min(best, segment_segment_distance(seg, edge));
  return best;
}

}  // namespace

bool segment_hits_scene(const Scene& scene, Vec2 a, Vec2 b, double radius) {
  // The arena interior is convex, so the wall clearance along the sweep is
  // minimized at one of the endpoints.
  if (std::min(scene.arena_signed_distance(a), scene.arena_signed_distance(b)) <=
      radius)
    return true;
  for (const auto& r : scene.obstacles)
    if (segment_rect_distance(r, a, b) <= radius) return true;
  return false;
}

}  // namespace crowdnav
