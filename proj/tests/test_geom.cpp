#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "geom/geometry.hpp"
#include "verify/oracles.hpp"

using namespace crowdnav;

namespace {

OrientedRect make_rect(double cx, double cy, double hw, double hl, double rot) {
  OrientedRect r;
  r.center = {cx, cy};
  r.half_w = hw;
  r.half_l = hl;
  r.rot = rot;
  return r;
}

Scene single_square_scene() {
  Scene s;
  s.obstacles.push_back(make_rect(3.0, 0.0, 0.5, 0.5, 0.0));
  return s;
}

}  // namespace

TEST_CASE("sample_scene respects side length clamps") {
  for (uint64_t seed : {1ull, 2ull, 99ull}) {
    // Wide stddev drives lots of draws into the clamps.
    SceneSampleParams p;
    p.side_stddev = 3.0;
    const Scene s = sample_scene(seed, 12, {}, p);
    REQUIRE(s.obstacles.size() == 12);
    for (const auto& r : s.obstacles) {
      CHECK(2.0 * r.half_w >= 0.1);
      CHECK(2.0 * r.half_w <= 5.0);
      CHECK(2.0 * r.half_l >= 0.1);
      CHECK(2.0 * r.half_l <= 5.0);
      CHECK(r.rot >= -std::numbers::pi);
      CHECK(r.rot < std::numbers::pi);
      for (const Vec2 c : r.corners()) {
        CHECK(std::abs(c.x) <= s.arena_half_extent);
        CHECK(std::abs(c.y) <= s.arena_half_extent);
      }
    }
  }
}

TEST_CASE("sample_scene is a pure function of its seed") {
  const std::vector<KeepOutDisc> ko = {{{1.0, 1.0}, 0.8}};
  const Scene a = sample_scene(42, 10, ko);
  const Scene b = sample_scene(42, 10, ko);
  REQUIRE(a.obstacles.size() == b.obstacles.size());
  for (size_t i = 0; i < a.obstacles.size(); ++i) {
    CHECK(a.obstacles[i].center.x == b.obstacles[i].center.x);
    CHECK(a.obstacles[i].center.y == b.obstacles[i].center.y);
    CHECK(a.obstacles[i].half_w == b.obstacles[i].half_w);
    CHECK(a.obstacles[i].half_l == b.obstacles[i].half_l);
    CHECK(a.obstacles[i].rot == b.obstacles[i].rot);
  }
  const Scene c = sample_scene(43, 10, ko);
  bool any_diff = false;
  for (size_t i = 0; i < c.obstacles.size(); ++i)
    any_diff |= c.obstacles[i].center.x != a.obstacles[i].center.x;
  CHECK(any_diff);
}

TEST_CASE("sample_scene keeps obstacles off keep-out discs") {
  const std::vector<KeepOutDisc> ko = {{{0.0, 0.0}, 1.0}, {{4.0, 4.0}, 1.0}};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = sample_scene(seed, 11, ko);
    for (const auto& r : s.obstacles)
      for (const auto& k : ko) CHECK(r.signed_distance(k.center) >= k.radius);
  }
}

TEST_CASE("sample_scene supports empty scenes and reports impossible seeds") {
  const Scene s = sample_scene(7, 0, {});
  CHECK(s.obstacles.empty());
  // A keep-out disc covering the whole arena leaves nowhere to place anything.
  const std::vector<KeepOutDisc> everywhere = {{{0.0, 0.0}, 20.0}};
  CHECK_THROWS_WITH_AS(sample_scene(123, 1, everywhere),
                       doctest::Contains("seed 123"), std::runtime_error);
}

TEST_CASE("raycast hits a known obstacle face at the exact distance") {
  const Scene s = single_square_scene();
  CHECK(raycast_single(s, {0, 0}, 0.0, 10.0) == doctest::Approx(2.5).epsilon(1e-12));
  // Beam pointing away only sees the wall behind.
  CHECK(raycast_single(s, {0, 0}, std::numbers::pi, 10.0) ==
        doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("raycast clamps to max range and never returns zero from free space") {
  const Scene s = single_square_scene();
  CHECK(raycast_single(s, {0, 0}, 0.0, 2.0) == 2.0);
  const auto ranges = raycast(s, {0, 0}, 0.3, 90, 6.0);
  REQUIRE(ranges.size() == 90);
  for (double r : ranges) {
    CHECK(r > 0.0);
    CHECK(r <= 6.0);
  }
}

TEST_CASE("raycast ranges are invariant under rotating scene and query together") {
  Scene s;
  s.obstacles.push_back(make_rect(2.0, 1.0, 0.4, 0.9, 0.7));
  s.obstacles.push_back(make_rect(-1.5, 2.0, 1.0, 0.3, -1.2));
  const Vec2 origin{0.5, -0.5};
  const double heading = 0.35;
  // Obstacles and query are rotated about the world origin; small max_range
  // keeps the (rotation-asymmetric) walls out of reach.
  const double max_range = 2.5;
  const auto base = raycast(s, origin, heading, 45, max_range);
  for (double phi : {0.3, 1.1, -2.4}) {
    Scene sr;
    sr.arena_half_extent = s.arena_half_extent;
    for (const auto& r : s.obstacles) {
      OrientedRect rr = r;
      rr.center = rotated(r.center, phi);
      rr.rot = r.rot + phi;
      sr.obstacles.push_back(rr);
    }
    const auto turned = raycast(sr, rotated(origin, phi), heading + phi, 45, max_range);
    for (size_t i = 0; i < base.size(); ++i)
      CHECK(std::abs(base[i] - turned[i]) <= 1e-6);
  }
}

TEST_CASE("raycast agrees with the stepping oracle on random scenes") {
  Rng rng(2024);
  int checked = 0;
  while (checked < 200) {
    const Scene s = sample_scene(rng.next_u64(), rng.uniform_int(0, 12), {});
    Vec2 origin{rng.uniform(-5.5, 5.5), rng.uniform(-5.5, 5.5)};
    if (s.point_blocked(origin)) continue;
    const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double fast = raycast_single(s, origin, angle, 6.0);
    const double slow = raycast_stepping_oracle(s, origin, angle, 6.0);
    CHECK(std::abs(fast - slow) <= 1e-3);
    ++checked;
  }
}

TEST_CASE("min_clearance matches hand-computed distances") {
  const Scene s = single_square_scene();
  CHECK(min_clearance(s, {0, 0}, 0.3) == doctest::Approx(2.2).epsilon(1e-12));
  // Next to the +x wall.
  CHECK(min_clearance(s, {5.5, 4.0}, 0.3) == doctest::Approx(0.2).epsilon(1e-12));
  // Inside the obstacle: negative by exactly the penetration depth plus radius.
  CHECK(min_clearance(s, {3.0, 0.1}, 0.3) == doctest::Approx(-0.7).epsilon(1e-12));
  // Touching contact is reported as exactly zero clearance.
  CHECK(min_clearance(s, {2.0, 0.0}, 0.5) == 0.0);
}

TEST_CASE("min_clearance shifts exactly with the disc radius") {
  Rng rng(77);
  const Scene s = sample_scene(5, 9, {});
  for (int i = 0; i < 50; ++i) {
    const Vec2 p{rng.uniform(-6, 6), rng.uniform(-6, 6)};
    const double r1 = rng.uniform(0.0, 1.0), r2 = rng.uniform(0.0, 1.0);
    // The radius is a single trailing subtraction, so against the zero-radius
    // baseline the identity holds bit-for-bit.
    CHECK(min_clearance(s, p, r1) == min_clearance(s, p, 0.0) - r1);
    CHECK(min_clearance(s, p, r1) - min_clearance(s, p, r2) ==
          doctest::Approx(r2 - r1).epsilon(1e-12));
  }
}

TEST_CASE("min_clearance agrees with the boundary sampling oracle") {
  Rng rng(4096);
  int checked = 0;
  while (checked < 60) {
    const Scene s = sample_scene(rng.next_u64(), rng.uniform_int(1, 10), {});
    const Vec2 p{rng.uniform(-6.5, 6.5), rng.uniform(-6.5, 6.5)};
    const double radius = rng.uniform(0.0, 0.5);
    const double fast = min_clearance(s, p, radius);
    const double slow = clearance_sampling_oracle(s, p, radius);
    CHECK(std::abs(fast - slow) <= 1e-3);
    ++checked;
  }
}

TEST_CASE("segment_hits_scene verdicts on constructed sweeps") {
  const Scene s = single_square_scene();
  CHECK(segment_hits_scene(s, {0, 0}, {5, 0}, 0.1));           // straight through
  CHECK_FALSE(segment_hits_scene(s, {0, 2}, {5, 2}, 0.1));     // clear lane
  CHECK(segment_hits_scene(s, {0, 2}, {5, 2}, 1.5));           // fat disc clips it
  CHECK(segment_hits_scene(s, {5.8, -5.0}, {5.8, 5.0}, 0.3));  // grazes +x wall
  CHECK_FALSE(segment_hits_scene(s, {5.6, -5.0}, {5.6, 5.0}, 0.3));
  // Exactly tangent contact counts as a hit.
  CHECK(segment_hits_scene(s, {2.0, -3.0}, {2.0, 3.0}, 0.5));
}

TEST_CASE("segment_hits_scene matches the sub-stepped clearance oracle") {
  Rng rng(515151);
  int checked = 0;
  while (checked < 80) {
    const Scene s = sample_scene(rng.next_u64(), rng.uniform_int(1, 10), {});
    const Vec2 a{rng.uniform(-5.5, 5.5), rng.uniform(-5.5, 5.5)};
    const Vec2 b{rng.uniform(-5.5, 5.5), rng.uniform(-5.5, 5.5)};
    const double radius = rng.uniform(0.05, 0.4);
    // Skip near-tangent sweeps: there the sampled oracle's verdict depends on
    // its step size rather than on the geometry.
    double sampled_min = std::numeric_limits<double>::infinity();
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {
      const Vec2 q = a + (b - a) * (static_cast<double>(i) / n);
      sampled_min = std::min(sampled_min, min_clearance(s, q, radius));
    }
    if (std::abs(sampled_min) < 2e-3) continue;
    CHECK(segment_hits_scene(s, a, b, radius) ==
          segment_sweep_oracle(s, a, b, radius));
    ++checked;
  }
}

TEST_CASE("segment and point distance helpers behave at degenerate inputs") {
  const Segment seg{{0, 0}, {0, 0}};
  CHECK(point_segment_distance({3, 4}, seg) == doctest::Approx(5.0));
  CHECK(segment_segment_distance({{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}) ==
        doctest::Approx(1.0));
  CHECK(segment_segment_distance({{0, 0}, {1, 1}}, {{1, 0}, {0, 1}}) == 0.0);
  CHECK(wrap_angle(3.0 * std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(0.5) == doctest::Approx(0.5));
}
