#pragma once

#include <cmath>
#include <map>
#include <string>

#include "nn/params.hpp"

namespace crowdnav {

// Adaptive-moment optimizer with the standard defaults. Walks parameters in
// sorted name order (the ParameterSet iteration order) so updates are
// bit-reproducible across runs.
template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::map<std::string, Mat<T>> m, v;

  void init(const ParameterSet<T>& ps) {
    t = 0;
    m.clear();
    v.clear();
    for (const std::string& name : ps.names()) {
      const Mat<T>& w = ps.value(name);
      m.emplace(name, Mat<T>(w.rows, w.cols));
      v.emplace(name, Mat<T>(w.rows, w.cols));
    }
  }

  void step(ParameterSet<T>* ps, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (const std::string& name : ps->names()) {
      Mat<T>& w = ps->value(name);
      const Mat<T>& g = ps->grad(name);
      Mat<T>& mi = m.at(name);
      Mat<T>& vi = v.at(name);
      for (int k = 0; k < w.size(); ++k) {
        double gk = static_cast<double>(g.data[k]);
        double mk = beta1 * static_cast<double>(mi.data[k]) + (1.0 - beta1) * gk;
        double vk = beta2 * static_cast<double>(vi.data[k]) + (1.0 - beta2) * gk * gk;
        mi.data[k] = static_cast<T>(mk);
        vi.data[k] = static_cast<T>(vk);
        w.data[k] -= static_cast<T>(lr * (mk / c1) / (std::sqrt(vk / c2) + eps));
      }
    }
    ps->bump_version();
  }
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(ParameterSet<T>* ps, double max_norm) {
  double sq = 0.0;
  for (const std::string& name : ps->names())
    for (const T& g : ps->grad(name).data) sq += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const std::string& name : ps->names())
      for (T& g : ps->grad(name).data) g = static_cast<T>(static_cast<double>(g) * s);
  }
  return norm;
}

}  // namespace crowdnav
