#pragma once

// Slow reference implementations used to cross-check the fast geometry and
// learning code. These deliberately avoid the analytic formulas under test:
// the raycast oracle only asks "is this point blocked", the clearance oracle
// only measures distances to densely sampled boundary points.

#include "geom/geometry.hpp"

namespace crowdnav {

// Marches along the ray in `step`-sized increments until it enters blocked
// space. Result is within one step of the true hit distance.
double raycast_stepping_oracle(const Scene& scene, Vec2 origin, double angle,
                               double max_range, double step = 1e-3);

// Signed clearance from dense boundary sampling: magnitude from the nearest
// sampled boundary point, sign from exact containment tests.
double clearance_sampling_oracle(const Scene& scene, Vec2 p, double radius,
                                 double boundary_step = 1e-3);

// Swept-disc verdict from sub-sampling min_clearance along the segment.
bool segment_sweep_oracle(const Scene& scene, Vec2 a, Vec2 b, double radius,
                          double step = 5e-4);

}  // namespace crowdnav
