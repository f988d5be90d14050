#pragma once

#include "nn/array.hpp"

namespace crowdnav {

struct GaeOut {
  Mat<double> advantages;  // n_envs x T
  Mat<double> returns;     // advantages + values
};

// Generalized advantage estimation over a rollout batch.
//   delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
//   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
// `values` carries one extra column: the bootstrap V(s_T) per environment.
// done_t = 1 cuts both the bootstrap and the recursion at that step.
GaeOut compute_gae(const Mat<double>& rewards, const Mat<double>& dones,
                   const Mat<double>& values, double gamma, double lambda);

// In-place shift/scale to zero mean and unit standard deviation (population
// std, small-epsilon guarded).
void normalize_advantages(Mat<double>* adv);

// Linear decay from lr0 to zero across the step budget, floored at zero.
double linear_lr(double lr0, long long steps_done, long long total_steps);

}  // namespace crowdnav
