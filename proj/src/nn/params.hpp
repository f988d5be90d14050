#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nn/array.hpp"
#include "util/rng.hpp"

namespace crowdnav {

// Named weight storage shared by one network. Iteration order is the sorted
// name order (std::map), which fixes the checkpoint layout and makes the
// optimizer walk parameters deterministically.
template <typename T>
class ParameterSet {
 public:
  Mat<T>& add(const std::string& name, int rows, int cols) {
    auto [it, fresh] = values_.try_emplace(name, Mat<T>(rows, cols));
    if (!fresh) throw std::invalid_argument("duplicate parameter: " + name);
    grads_.emplace(name, Mat<T>(rows, cols));
    return it->second;
  }

  Mat<T>& value(const std::string& name) { return at(values_, name); }
  const Mat<T>& value(const std::string& name) const { return at(values_, name); }
  Mat<T>& grad(const std::string& name) { return at(grads_, name); }
  const Mat<T>& grad(const std::string& name) const { return at(grads_, name); }
  bool has(const std::string& name) const { return values_.count(name) != 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& [k, v] : values_) n += static_cast<size_t>(v.size());
    return n;
  }

  void zero_grads() {
    for (auto& [k, g] : grads_) g.zero();
  }

  // Bumped by the optimizer so cached forward graphs know when to re-copy.
  uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  template <typename M>
  static auto& at(M& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Mat<T>> values_;
  std::map<std::string, Mat<T>> grads_;
  uint64_t version_ = 0;
};

// Orthogonal rows (or columns, whichever dimension is smaller) via modified
// Gram-Schmidt on a Gaussian draw, scaled by the gain. Math runs in double
// regardless of T so float and double parameter sets match bit-for-bit after
// the narrowing cast.
template <typename T>
void orthogonal_init(Mat<T>* w, Rng* rng, double gain) {
  const int r = w->rows, c = w->cols;
  const bool tall = r > c;  // orthonormalize the shorter side
  const int n = tall ? c : r;  // vectors to orthonormalize
  const int len = tall ? r : c;

  std::vector<std::vector<double>> v(n, std::vector<double>(len));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) v[i][j] = rng->normal(0.0, 1.0);

  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < i; ++p) {
      double d = 0.0;
      for (int j = 0; j < len; ++j) d += v[i][j] * v[p][j];
      for (int j = 0; j < len; ++j) v[i][j] -= d * v[p][j];
    }
    double nrm = 0.0;
    for (int j = 0; j < len; ++j) nrm += v[i][j] * v[i][j];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) {  // astronomically unlikely; redraw would break determinism
      v[i][i % len] = 1.0;
      nrm = 1.0;
    }
    for (int j = 0; j < len; ++j) v[i][j] /= nrm;
  }

  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double x = tall ? v[j][i] : v[i][j];
      (*w)(i, j) = static_cast<T>(gain * x);
    }
}

}  // namespace crowdnav
