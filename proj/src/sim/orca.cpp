#include "sim/orca.hpp"

#include <algorithm>
#include <cmath>

namespace crowdnav {

namespace {
constexpr double kEps = 1e-10;
}

HalfPlane orca_halfplane_agent(const OrcaAgent& self, const OrcaAgent& other,
                               const OrcaParams& params) {
  const Vec2 rel_pos = other.position - self.position;
  const Vec2 rel_vel = self.velocity - other.velocity;
  const double dist_sq = norm_sq(rel_pos);
  const double r = self.radius + other.radius;
  const double r_sq = r * r;

  HalfPlane plane;
  Vec2 u;

  if (dist_sq > r_sq) {
    const double inv_horizon = 1.0 / params.time_horizon;
    // Vector from the cutoff-circle center to the relative velocity.
    const Vec2 w = rel_vel - rel_pos * inv_horizon;
    const double w_len_sq = norm_sq(w);
    const double dot1 = dot(w, rel_pos);
    if (dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq) {
      // Closest point lies on the cutoff circle.
      const double w_len = std::sqrt(w_len_sq);
      const Vec2 unit_w = w * (1.0 / w_len);
      plane.dir = {unit_w.y, -unit_w.x};
      u = unit_w * (r * inv_horizon - w_len);
    } else {
      // Closest point lies on one of the cone legs.
      const double leg = std::sqrt(dist_sq - r_sq);
      if (det(rel_pos, w) > 0.0) {
        plane.dir = Vec2{rel_pos.x * leg - rel_pos.y * r,
                         rel_pos.x * r + rel_pos.y * leg} *
                    (1.0 / dist_sq);
      } else {
        plane.dir = Vec2{rel_pos.x * leg + rel_pos.y * r,
                         -rel_pos.x * r + rel_pos.y * leg} *
                    (-1.0 / dist_sq);
      }
      u = plane.dir * dot(rel_vel, plane.dir) - rel_vel;
    }
  } else {
    // Discs already overlap: demand separation within one step.
    const double inv_step = 1.0 / params.dt;
    const Vec2 w = rel_vel - rel_pos * inv_step;
    const double w_len = norm(w);
    const Vec2 unit_w = w_len > kEps ? w * (1.0 / w_len) : Vec2{1.0, 0.0};
    plane.dir = {unit_w.y, -unit_w.x};
    u = unit_w * (r * inv_step - w_len);
  }

  plane.point = self.velocity + u * 0.5;
  return plane;
}

bool orca_halfplane_segment(const OrcaAgent& self, Segment seg,
                            const OrcaParams& params, HalfPlane* out) {
  const double d = point_segment_distance(self.position, seg);
  if (d - self.radius > params.neighbor_dist) return false;

  // Outward normal at the nearest point of the segment.
  Vec2 n;
  if (d > kEps) {
    const Vec2 e = seg.b - seg.a;
    const double len_sq = norm_sq(e);
    const double t = len_sq > 0.0
                         ? std::clamp(dot(self.position - seg.a, e) / len_sq, 0.0, 1.0)
                         : 0.0;
    n = (self.position - (seg.a + e * t)) * (1.0 / d);
  } else {
    // Centered on the segment; push out to its left, arbitrarily but
    // deterministically.
    const Vec2 e = normalized(seg.b - seg.a);
    n = {-e.y, e.x};
  }

  // Feasible velocities satisfy v.n >= bound: approach no faster than the gap
  // closes over the horizon, or escape overlap within one step.
  const double gap = d - self.radius;
  const double bound = gap > 0.0 ? -gap / params.time_horizon_obst
                                 : -gap / params.dt;
  out->point = n * bound;
  out->dir = {n.y, -n.x};
  return true;
}

namespace {

// 1-D program along line `index`, bounded by the max-speed circle and the
// previously satisfied half-planes.
bool solve_on_line(const std::vector<HalfPlane>& lines, size_t index,
                   double max_speed, Vec2 opt, bool direction_opt,
                   Vec2* result) {
  const HalfPlane& ln = lines[index];
  const double dot_pd = dot(ln.point, ln.dir);
  const double discriminant =
      dot_pd * dot_pd + max_speed * max_speed - norm_sq(ln.point);
  if (discriminant < 0.0) return false;

  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot_pd - sqrt_disc;
  double t_right = -dot_pd + sqrt_disc;

  for (size_t i = 0; i < index; ++i) {
    const double denom = det(ln.dir, lines[i].dir);
    const double numer = det(lines[i].dir, ln.point - lines[i].point);
    if (std::abs(denom) <= kEps) {
      if (numer < 0.0) return false;  // parallel and fully outside
      continue;
    }
    const double t = numer / denom;
    if (denom >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    *result = dot(opt, ln.dir) > 0.0 ? ln.point + ln.dir * t_right
                                     : ln.point + ln.dir * t_left;
  } else {
    const double t = dot(ln.dir, opt - ln.point);
    *result = ln.point + ln.dir * std::clamp(t, t_left, t_right);
  }
  return true;
}

// Incremental 2-D program. Returns lines.size() on success, otherwise the
// index of the first line that could not be satisfied.
size_t solve_halfplanes(const std::vector<HalfPlane>& lines, double max_speed,
                        Vec2 opt, bool direction_opt, Vec2* result) {
  if (direction_opt) {
    *result = opt * max_speed;  // opt is a unit direction here
  } else if (norm_sq(opt) > max_speed * max_speed) {
    *result = normalized(opt) * max_speed;
  } else {
    *result = opt;
  }

  for (size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].dir, lines[i].point - *result) > 0.0) {
      const Vec2 saved = *result;
      if (!solve_on_line(lines, i, max_speed, opt, direction_opt, result)) {
        *result = saved;
        return i;
      }
    }
  }
  return lines.size();
}

// Infeasible case: walk the failed agent constraints and pick the least
// violating velocity. Segment constraints (the first n_hard lines) stay hard.
void solve_least_violating(const std::vector<HalfPlane>& lines, size_t n_hard,
                           size_t begin, double max_speed, Vec2* result) {
  double distance = 0.0;
  for (size_t i = begin; i < lines.size(); ++i) {
    if (det(lines[i].dir, lines[i].point - *result) > distance) {
      std::vector<HalfPlane> proj(lines.begin(),
                                  lines.begin() + static_cast<long>(n_hard));
      for (size_t j = n_hard; j < i; ++j) {
        HalfPlane ln;
        const double determinant = det(lines[i].dir, lines[j].dir);
        if (std::abs(determinant) <= kEps) {
          if (dot(lines[i].dir, lines[j].dir) > 0.0) continue;
          ln.point = (lines[i].point + lines[j].point) * 0.5;
        } else {
          ln.point = lines[i].point +
                     lines[i].dir * (det(lines[j].dir,
                                         lines[i].point - lines[j].point) /
                                     determinant);
        }
        ln.dir = normalized(lines[j].dir - lines[i].dir);
        proj.push_back(ln);
      }
      const Vec2 saved = *result;
      if (solve_halfplanes(proj, max_speed,
                           Vec2{-lines[i].dir.y, lines[i].dir.x}, true,
                           result) < proj.size()) {
        // This should not happen by construction; keep the previous result.
        *result = saved;
      }
      distance = det(lines[i].dir, lines[i].point - *result);
    }
  }
}

}  // namespace

Vec2 orca_velocity(const OrcaAgent& self, Vec2 pref_vel, double max_speed,
                   const std::vector<OrcaAgent>& neighbors,
                   const std::vector<Segment>& segments,
                   const OrcaParams& params) {
  std::vector<HalfPlane> lines;
  lines.reserve(segments.size() + neighbors.size());

  for (const auto& seg : segments) {
    HalfPlane h;
    if (orca_halfplane_segment(self, seg, params, &h)) lines.push_back(h);
  }
  const size_t n_hard = lines.size();

  for (const auto& other : neighbors) {
    if (distance(self.position, other.position) > params.neighbor_dist)
      continue;
    lines.push_back(orca_halfplane_agent(self, other, params));
  }

  Vec2 result;
  const size_t fail =
      solve_halfplanes(lines, max_speed, pref_vel, false, &result);
  if (fail < lines.size())
    solve_least_violating(lines, n_hard, fail, max_speed, &result);
  return result;
}

Vec2 pref_velocity(Vec2 position, Vec2 goal, double pref_speed, double dt) {
  const Vec2 to_goal = goal - position;
  const double d = norm(to_goal);
  if (d <= pref_speed * dt) {
    return to_goal * (1.0 / dt);
  }
  return to_goal * (pref_speed / d);
}

}  // namespace crowdnav
