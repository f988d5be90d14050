#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace crowdnav {

// Dense row-major matrix. Vectors are 1 x n rows by convention; everything
// the networks need fits two dimensions, so there is no general tensor.
template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}
  Mat(int r, int c, std::initializer_list<T> values)
      : rows(r), cols(c), data(values) {
    assert(static_cast<int>(data.size()) == r * c);
  }

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }

  int size() const { return rows * cols; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }
};

}  // namespace crowdnav
