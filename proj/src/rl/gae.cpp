#include "rl/gae.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdnav {

GaeOut compute_gae(const Mat<double>& rewards, const Mat<double>& dones,
                   const Mat<double>& values, double gamma, double lambda) {
  const int n = rewards.rows, t_len = rewards.cols;
  if (!dones.same_shape(rewards) || values.rows != n || values.cols != t_len + 1)
    throw std::invalid_argument("gae buffer shapes disagree");

  GaeOut out;
  out.advantages = Mat<double>(n, t_len);
  out.returns = Mat<double>(n, t_len);
  for (int e = 0; e < n; ++e) {
    double acc = 0.0;
    for (int t = t_len - 1; t >= 0; --t) {
      const double not_done = 1.0 - dones(e, t);
      const double delta =
          rewards(e, t) + gamma * values(e, t + 1) * not_done - values(e, t);
      acc = delta + gamma * lambda * not_done * acc;
      out.advantages(e, t) = acc;
      out.returns(e, t) = acc + values(e, t);
    }
  }
  return out;
}

void normalize_advantages(Mat<double>* adv) {
  const int n = adv->size();
  if (n == 0) return;
  double mean = 0.0;
  for (double a : adv->data) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv->data) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / n);
  for (double& a : adv->data) a = (a - mean) / (std + 1e-8);
}

double linear_lr(double lr0, long long steps_done, long long total_steps) {
  if (total_steps <= 0) return lr0;
  const double frac = 1.0 - double(steps_done) / double(total_steps);
  return frac > 0.0 ? lr0 * frac : 0.0;
}

}  // namespace crowdnav
