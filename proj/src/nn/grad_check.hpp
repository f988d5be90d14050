#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nn/params.hpp"
#include "util/rng.hpp"

namespace crowdnav {

// Central-difference audit of analytic gradients. The probe protocol:
//   1. one backward pass records analytic d(loss)/d(theta) for every tensor,
//   2. a fixed number of (tensor, element) pairs are drawn at random,
//   3. each probed element is wiggled by +-h and the loss re-evaluated,
//   4. relative error uses max(|analytic|, |numeric|, guard) in the
//      denominator so near-zero gradients do not blow up the ratio.
// All arithmetic runs in double.
struct GradCheckPoint {
  std::string name;
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckPoint> points;
  double max_rel_err = 0.0;
  bool ok(double tol) const { return max_rel_err <= tol; }
};

// `loss` must run forward (and, when with_grad, backward into params' grads)
// and return the scalar loss. h defaults to the audit step used everywhere.
inline GradCheckReport grad_check(ParameterSet<double>* params,
                                  const std::function<double(bool with_grad)>& loss,
                                  int n_probes, uint64_t seed, double h = 1e-5,
                                  double denom_guard = 1e-8) {
  params->zero_grads();
  loss(true);

  // Snapshot analytic grads before the probing wiggles re-run forward.
  std::map<std::string, Mat<double>> analytic;
  for (const std::string& name : params->names()) analytic.emplace(name, params->grad(name));

  std::vector<std::pair<std::string, int>> slots;
  for (const std::string& name : params->names()) {
    int n = params->value(name).size();
    for (int i = 0; i < n; ++i) slots.emplace_back(name, i);
  }

  Rng rng(seed);
  GradCheckReport report;
  for (int p = 0; p < n_probes; ++p) {
    auto [name, idx] = slots[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(slots.size()) - 1))];
    Mat<double>& w = params->value(name);
    double saved = w.data[idx];

    w.data[idx] = saved + h;
    params->bump_version();
    double up = loss(false);
    w.data[idx] = saved - h;
    params->bump_version();
    double down = loss(false);
    w.data[idx] = saved;
    params->bump_version();

    GradCheckPoint pt;
    pt.name = name;
    pt.index = idx;
    pt.analytic = analytic.at(name).data[idx];
    pt.numeric = (up - down) / (2.0 * h);
    pt.rel_err = std::abs(pt.analytic - pt.numeric) /
                 std::max({std::abs(pt.analytic), std::abs(pt.numeric), denom_guard});
    report.max_rel_err = std::max(report.max_rel_err, pt.rel_err);
    report.points.push_back(std::move(pt));
  }
  return report;
}

}  // namespace crowdnav
