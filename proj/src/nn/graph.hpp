#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nn/array.hpp"
#include "nn/params.hpp"

namespace crowdnav {

// Reverse-mode tape over Mat<T>. Nodes are created in topological order by
// construction (ops can only reference existing refs), so forward() is a
// single sweep and backward() is the exact reverse sweep with additive
// accumulation at fan-in points.
//
// Graphs are built once and re-evaluated many times: shapes are fixed at
// build time, inputs get new values via set_value(). Masks, pooling weights,
// one-hot action rows and the like enter as input *data*, never as structure,
// which is what lets one static graph serve every step of a rollout.
template <typename T>
class Graph {
 public:
  using Ref = int;

  // Rows whose additive mask pushes every score at or below this threshold
  // are treated as fully masked and produce zero output instead of NaN.
  static constexpr double kMaskedRowThreshold = -1e8;

  // ---- leaves ----

  Ref constant(Mat<T> m) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(m);
    return push(std::move(n));
  }

  Ref input(int rows, int cols) {
    Node n;
    n.op = Op::Input;
    n.value = Mat<T>(rows, cols);
    return push(std::move(n));
  }

  // One node per parameter name; repeated requests return the shared node so
  // weight reuse across timesteps accumulates gradients naturally.
  Ref param(ParameterSet<T>* ps, const std::string& name) {
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
      if (nodes_[i].op == Op::Param && nodes_[i].ps == ps && nodes_[i].pname == name)
        return i;
    Node n;
    n.op = Op::Param;
    n.ps = ps;
    n.pname = name;
    n.value = ps->value(name);
    n.copied_version = ps->version();
    return push(std::move(n));
  }

  void set_value(Ref r, const Mat<T>& v) {
    Node& n = node(r);
    if (n.op != Op::Input) throw std::logic_error("set_value on a non-input node");
    if (!n.value.same_shape(v)) throw std::invalid_argument("set_value shape mismatch");
    n.value = v;
  }

  // ---- elementwise and affine ----

  Ref add(Ref a, Ref b) { return binary(Op::Add, a, b, shape_of(a)); }
  Ref sub(Ref a, Ref b) { return binary(Op::Sub, a, b, shape_of(a)); }
  Ref mul(Ref a, Ref b) { return binary(Op::Mul, a, b, shape_of(a)); }
  Ref min_elem(Ref a, Ref b) { return binary(Op::MinElem, a, b, shape_of(a)); }

  Ref scale(Ref a, T s) {
    Node n = unary(Op::Scale, a, shape_of(a));
    n.x0 = s;
    return push(std::move(n));
  }

  Ref clamp(Ref a, T lo, T hi) {
    Node n = unary(Op::Clamp, a, shape_of(a));
    n.x0 = lo;
    n.x1 = hi;
    return push(std::move(n));
  }

  Ref tanh_op(Ref a) { return push(unary(Op::Tanh, a, shape_of(a))); }
  Ref sigmoid(Ref a) { return push(unary(Op::Sigmoid, a, shape_of(a))); }
  Ref exp_op(Ref a) { return push(unary(Op::Exp, a, shape_of(a))); }
  Ref relu(Ref a) { return push(unary(Op::Relu, a, shape_of(a))); }
  Ref square(Ref a) { return push(unary(Op::Square, a, shape_of(a))); }

  // a: n x k, b: k x m
  Ref matmul(Ref a, Ref b) {
    auto [ar, ak] = shape_of(a);
    auto [bk, bm] = shape_of(b);
    if (ak != bk) throw std::invalid_argument("matmul inner dims disagree");
    return binary(Op::MatMul, a, b, {ar, bm});
  }

  // a: n x k, b: m x k  ->  a b^T : n x m. Weights live as [out x in].
  Ref matmul_nt(Ref a, Ref b) {
    auto [ar, ak] = shape_of(a);
    auto [bm, bk] = shape_of(b);
    if (ak != bk) throw std::invalid_argument("matmul_nt inner dims disagree");
    return binary(Op::MatMulNT, a, b, {ar, bm});
  }

  // a: n x m, v: 1 x m broadcast-added to every row
  Ref add_row(Ref a, Ref v) {
    auto [ar, am] = shape_of(a);
    auto [vr, vm] = shape_of(v);
    if (vr != 1 || vm != am) throw std::invalid_argument("add_row shape mismatch");
    return binary(Op::AddRow, a, v, {ar, am});
  }

  // ---- shape plumbing ----

  Ref slice_cols(Ref a, int c0, int c1) {
    auto [ar, am] = shape_of(a);
    if (!(0 <= c0 && c0 < c1 && c1 <= am))
      throw std::invalid_argument("slice_cols out of range");
    Node n = unary(Op::SliceCols, a, {ar, c1 - c0});
    n.i0 = c0;
    n.i1 = c1;
    return push(std::move(n));
  }

  Ref row(Ref a, int r) {
    auto [ar, am] = shape_of(a);
    if (!(0 <= r && r < ar)) throw std::invalid_argument("row out of range");
    Node n = unary(Op::Row, a, {1, am});
    n.i0 = r;
    return push(std::move(n));
  }

  Ref concat_cols(Ref a, Ref b) {
    auto [ar, am] = shape_of(a);
    auto [br, bm] = shape_of(b);
    if (ar != br) throw std::invalid_argument("concat_cols row mismatch");
    return binary(Op::ConcatCols, a, b, {ar, am + bm});
  }

  Ref concat_rows(Ref a, Ref b) {
    auto [ar, am] = shape_of(a);
    auto [br, bm] = shape_of(b);
    if (am != bm) throw std::invalid_argument("concat_rows col mismatch");
    return binary(Op::ConcatRows, a, b, {ar + br, am});
  }

  Ref flatten(Ref a) {
    auto [ar, am] = shape_of(a);
    return push(unary(Op::Flatten, a, {1, ar * am}));
  }

  // ---- reductions ----

  Ref sum(Ref a) { return push(unary(Op::Sum, a, {1, 1})); }
  Ref mean(Ref a) { return push(unary(Op::Mean, a, {1, 1})); }

  // ---- structured ops ----

  // x: C_in x L, w: C_out x (C_in*k), b: 1 x C_out; valid cross-correlation.
  Ref conv1d(Ref x, Ref w, Ref b, int kernel, int stride) {
    auto [cin, len] = shape_of(x);
    auto [cout, wk] = shape_of(w);
    auto [br, bc] = shape_of(b);
    if (wk != cin * kernel) throw std::invalid_argument("conv1d kernel shape mismatch");
    if (br != 1 || bc != cout) throw std::invalid_argument("conv1d bias shape mismatch");
    if (len < kernel) throw std::invalid_argument("conv1d input shorter than kernel");
    int lout = (len - kernel) / stride + 1;
    Node n;
    n.op = Op::Conv1d;
    n.a = x;
    n.b = w;
    n.c = b;
    n.i0 = kernel;
    n.i1 = stride;
    n.value = Mat<T>(cout, lout);
    return push(std::move(n));
  }

  // Per-row softmax with the all-masked guard: rows whose maximum entry is
  // at or below kMaskedRowThreshold come out identically zero.
  Ref softmax_rows_guarded(Ref a) {
    return push(unary(Op::SoftmaxRowsGuarded, a, shape_of(a)));
  }

  Ref log_softmax_rows(Ref a) {
    return push(unary(Op::LogSoftmaxRows, a, shape_of(a)));
  }

  // ---- evaluation ----

  const Mat<T>& value(Ref r) const { return node(r).value; }
  const Mat<T>& grad(Ref r) const { return node(r).grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  void forward() {
    for (Node& n : nodes_) eval(n);
  }

  // Seeds d(loss)/d(loss) = 1 (loss must be 1x1), sweeps in reverse, then
  // adds each parameter node's gradient into its ParameterSet slot.
  void backward(Ref loss) {
    const Node& ln = node(loss);
    if (ln.value.rows != 1 || ln.value.cols != 1)
      throw std::logic_error("backward target must be 1x1");
    for (Node& n : nodes_) {
      if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols)
        n.grad = Mat<T>(n.value.rows, n.value.cols);
      else
        n.grad.zero();
    }
    node(loss).grad(0, 0) = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) propagate(nodes_[i]);
    for (Node& n : nodes_) {
      if (n.op != Op::Param) continue;
      Mat<T>& g = n.ps->grad(n.pname);
      for (int k = 0; k < g.size(); ++k) g.data[k] += n.grad.data[k];
    }
  }

 private:
  enum class Op {
    Constant, Input, Param,
    Add, Sub, Mul, MinElem, Scale, Clamp,
    Tanh, Sigmoid, Exp, Relu, Square,
    MatMul, MatMulNT, AddRow,
    SliceCols, Row, ConcatCols, ConcatRows, Flatten,
    Sum, Mean,
    Conv1d, SoftmaxRowsGuarded, LogSoftmaxRows,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    Mat<T> value;
    Mat<T> grad;
    T x0 = T(0), x1 = T(0);
    int i0 = 0, i1 = 0;
    ParameterSet<T>* ps = nullptr;
    std::string pname;
    uint64_t copied_version = 0;
  };

  Ref push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Node& node(Ref r) { return nodes_.at(r); }
  const Node& node(Ref r) const { return nodes_.at(r); }

  struct Shape {
    int rows, cols;
  };
  Shape shape_of(Ref r) const {
    const Node& n = node(r);
    return {n.value.rows, n.value.cols};
  }

  Node unary(Op op, Ref a, Shape s) {
    Node n;
    n.op = op;
    n.a = a;
    n.value = Mat<T>(s.rows, s.cols);
    return n;
  }

  Ref binary(Op op, Ref a, Ref b, Shape s) {
    if (op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::MinElem) {
      if (!node(a).value.same_shape(node(b).value))
        throw std::invalid_argument("elementwise shape mismatch");
    }
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.value = Mat<T>(s.rows, s.cols);
    return push(std::move(n));
  }

  void eval(Node& n) {
    switch (n.op) {
      case Op::Constant:
      case Op::Input:
        break;
      case Op::Param:
        // Re-copy only after an optimizer step bumped the set's version.
        if (n.copied_version != n.ps->version()) {
          n.value = n.ps->value(n.pname);
          n.copied_version = n.ps->version();
        }
        break;
      case Op::Add: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = A.data[k] + B.data[k];
        break;
      }
      case Op::Sub: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = A.data[k] - B.data[k];
        break;
      }
      case Op::Mul: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = A.data[k] * B.data[k];
        break;
      }
      case Op::MinElem: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int k = 0; k < n.value.size(); ++k)
          n.value.data[k] = A.data[k] < B.data[k] ? A.data[k] : B.data[k];
        break;
      }
      case Op::Scale: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = n.x0 * A.data[k];
        break;
      }
      case Op::Clamp: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k) {
          T x = A.data[k];
          n.value.data[k] = x < n.x0 ? n.x0 : (x > n.x1 ? n.x1 : x);
        }
        break;
      }
      case Op::Tanh: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = std::tanh(A.data[k]);
        break;
      }
      case Op::Sigmoid: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k)
          n.value.data[k] = T(1) / (T(1) + std::exp(-A.data[k]));
        break;
      }
      case Op::Exp: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = std::exp(A.data[k]);
        break;
      }
      case Op::Relu: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k)
          n.value.data[k] = A.data[k] > T(0) ? A.data[k] : T(0);
        break;
      }
      case Op::Square: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < n.value.size(); ++k) n.value.data[k] = A.data[k] * A.data[k];
        break;
      }
      case Op::MatMul: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        n.value.zero();
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            T aik = A(i, k);
            if (aik == T(0)) continue;
            for (int j = 0; j < B.cols; ++j) n.value(i, j) += aik * B(k, j);
          }
        break;
      }
      case Op::MatMulNT: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < B.rows; ++j) {
            T acc = T(0);
            for (int k = 0; k < A.cols; ++k) acc += A(i, k) * B(j, k);
            n.value(i, j) = acc;
          }
        break;
      }
      case Op::AddRow: {
        const Mat<T>&A = nodes_[n.a].value, &V = nodes_[n.b].value;
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < A.cols; ++j) n.value(i, j) = A(i, j) + V(0, j);
        break;
      }
      case Op::SliceCols: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int i = 0; i < n.value.rows; ++i)
          for (int j = 0; j < n.value.cols; ++j) n.value(i, j) = A(i, n.i0 + j);
        break;
      }
      case Op::Row: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int j = 0; j < n.value.cols; ++j) n.value(0, j) = A(n.i0, j);
        break;
      }
      case Op::ConcatCols: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < A.cols; ++j) n.value(i, j) = A(i, j);
          for (int j = 0; j < B.cols; ++j) n.value(i, A.cols + j) = B(i, j);
        }
        break;
      }
      case Op::ConcatRows: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < A.cols; ++j) n.value(i, j) = A(i, j);
        for (int i = 0; i < B.rows; ++i)
          for (int j = 0; j < B.cols; ++j) n.value(A.rows + i, j) = B(i, j);
        break;
      }
      case Op::Flatten: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int k = 0; k < A.size(); ++k) n.value.data[k] = A.data[k];
        break;
      }
      case Op::Sum: {
        const Mat<T>& A = nodes_[n.a].value;
        T acc = T(0);
        for (int k = 0; k < A.size(); ++k) acc += A.data[k];
        n.value(0, 0) = acc;
        break;
      }
      case Op::Mean: {
        const Mat<T>& A = nodes_[n.a].value;
        T acc = T(0);
        for (int k = 0; k < A.size(); ++k) acc += A.data[k];
        n.value(0, 0) = acc / static_cast<T>(A.size());
        break;
      }
      case Op::Conv1d: {
        const Mat<T>&X = nodes_[n.a].value, &W = nodes_[n.b].value, &B2 = nodes_[n.c].value;
        int kernel = n.i0, stride = n.i1, cin = X.rows;
        for (int o = 0; o < n.value.rows; ++o)
          for (int j = 0; j < n.value.cols; ++j) {
            T acc = B2(0, o);
            for (int ci = 0; ci < cin; ++ci)
              for (int t = 0; t < kernel; ++t)
                acc += W(o, ci * kernel + t) * X(ci, j * stride + t);
            n.value(o, j) = acc;
          }
        break;
      }
      case Op::SoftmaxRowsGuarded: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int i = 0; i < A.rows; ++i) {
          T mx = A(i, 0);
          for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A(i, j));
          if (static_cast<double>(mx) <= kMaskedRowThreshold) {
            for (int j = 0; j < A.cols; ++j) n.value(i, j) = T(0);
            continue;
          }
          T denom = T(0);
          for (int j = 0; j < A.cols; ++j) {
            T e = std::exp(A(i, j) - mx);
            n.value(i, j) = e;
            denom += e;
          }
          for (int j = 0; j < A.cols; ++j) n.value(i, j) /= denom;
        }
        break;
      }
      case Op::LogSoftmaxRows: {
        const Mat<T>& A = nodes_[n.a].value;
        for (int i = 0; i < A.rows; ++i) {
          T mx = A(i, 0);
          for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A(i, j));
          T denom = T(0);
          for (int j = 0; j < A.cols; ++j) denom += std::exp(A(i, j) - mx);
          T lse = mx + std::log(denom);
          for (int j = 0; j < A.cols; ++j) n.value(i, j) = A(i, j) - lse;
        }
        break;
      }
    }
  }

  void propagate(Node& n) {
    bool any = false;
    for (const T& g : n.grad.data)
      if (g != T(0)) {
        any = true;
        break;
      }
    if (!any) return;

    switch (n.op) {
      case Op::Constant:
      case Op::Input:
      case Op::Param:
        break;
      case Op::Add: {
        accum(n.a, n.grad);
        accum(n.b, n.grad);
        break;
      }
      case Op::Sub: {
        accum(n.a, n.grad);
        Mat<T>& gb = nodes_[n.b].grad;
        for (int k = 0; k < gb.size(); ++k) gb.data[k] -= n.grad.data[k];
        break;
      }
      case Op::Mul: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        for (int k = 0; k < n.grad.size(); ++k) {
          ga.data[k] += n.grad.data[k] * B.data[k];
          gb.data[k] += n.grad.data[k] * A.data[k];
        }
        break;
      }
      case Op::MinElem: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        // Ties route to the second argument.
        for (int k = 0; k < n.grad.size(); ++k) {
          if (A.data[k] < B.data[k])
            ga.data[k] += n.grad.data[k];
          else
            gb.data[k] += n.grad.data[k];
        }
        break;
      }
      case Op::Scale: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k) ga.data[k] += n.x0 * n.grad.data[k];
        break;
      }
      case Op::Clamp: {
        const Mat<T>& A = nodes_[n.a].value;
        Mat<T>& ga = nodes_[n.a].grad;
        // Strict interior only; saturated and boundary entries block gradient.
        for (int k = 0; k < n.grad.size(); ++k)
          if (A.data[k] > n.x0 && A.data[k] < n.x1) ga.data[k] += n.grad.data[k];
        break;
      }
      case Op::Tanh: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k)
          ga.data[k] += n.grad.data[k] * (T(1) - n.value.data[k] * n.value.data[k]);
        break;
      }
      case Op::Sigmoid: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k)
          ga.data[k] += n.grad.data[k] * n.value.data[k] * (T(1) - n.value.data[k]);
        break;
      }
      case Op::Exp: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k)
          ga.data[k] += n.grad.data[k] * n.value.data[k];
        break;
      }
      case Op::Relu: {
        const Mat<T>& A = nodes_[n.a].value;
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k)
          if (A.data[k] > T(0)) ga.data[k] += n.grad.data[k];
        break;
      }
      case Op::Square: {
        const Mat<T>& A = nodes_[n.a].value;
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < n.grad.size(); ++k)
          ga.data[k] += T(2) * A.data[k] * n.grad.data[k];
        break;
      }
      case Op::MatMul: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        // dA = dY B^T, dB = A^T dY
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            T acc = T(0);
            for (int j = 0; j < B.cols; ++j) acc += n.grad(i, j) * B(k, j);
            ga(i, k) += acc;
          }
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            T aik = A(i, k);
            if (aik == T(0)) continue;
            for (int j = 0; j < B.cols; ++j) gb(k, j) += aik * n.grad(i, j);
          }
        break;
      }
      case Op::MatMulNT: {
        const Mat<T>&A = nodes_[n.a].value, &B = nodes_[n.b].value;
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        // Y = A B^T: dA = dY B, dB = dY^T A
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            T acc = T(0);
            for (int j = 0; j < B.rows; ++j) acc += n.grad(i, j) * B(j, k);
            ga(i, k) += acc;
          }
        for (int j = 0; j < B.rows; ++j)
          for (int k = 0; k < B.cols; ++k) {
            T acc = T(0);
            for (int i = 0; i < A.rows; ++i) acc += n.grad(i, j) * A(i, k);
            gb(j, k) += acc;
          }
        break;
      }
      case Op::AddRow: {
        Mat<T>&ga = nodes_[n.a].grad, &gv = nodes_[n.b].grad;
        for (int i = 0; i < n.grad.rows; ++i)
          for (int j = 0; j < n.grad.cols; ++j) {
            ga(i, j) += n.grad(i, j);
            gv(0, j) += n.grad(i, j);
          }
        break;
      }
      case Op::SliceCols: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int i = 0; i < n.grad.rows; ++i)
          for (int j = 0; j < n.grad.cols; ++j) ga(i, n.i0 + j) += n.grad(i, j);
        break;
      }
      case Op::Row: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int j = 0; j < n.grad.cols; ++j) ga(n.i0, j) += n.grad(0, j);
        break;
      }
      case Op::ConcatCols: {
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        for (int i = 0; i < ga.rows; ++i) {
          for (int j = 0; j < ga.cols; ++j) ga(i, j) += n.grad(i, j);
          for (int j = 0; j < gb.cols; ++j) gb(i, j) += n.grad(i, ga.cols + j);
        }
        break;
      }
      case Op::ConcatRows: {
        Mat<T>&ga = nodes_[n.a].grad, &gb = nodes_[n.b].grad;
        for (int i = 0; i < ga.rows; ++i)
          for (int j = 0; j < ga.cols; ++j) ga(i, j) += n.grad(i, j);
        for (int i = 0; i < gb.rows; ++i)
          for (int j = 0; j < gb.cols; ++j) gb(i, j) += n.grad(ga.rows + i, j);
        break;
      }
      case Op::Flatten: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int k = 0; k < ga.size(); ++k) ga.data[k] += n.grad.data[k];
        break;
      }
      case Op::Sum: {
        Mat<T>& ga = nodes_[n.a].grad;
        T g = n.grad(0, 0);
        for (int k = 0; k < ga.size(); ++k) ga.data[k] += g;
        break;
      }
      case Op::Mean: {
        Mat<T>& ga = nodes_[n.a].grad;
        T g = n.grad(0, 0) / static_cast<T>(ga.size());
        for (int k = 0; k < ga.size(); ++k) ga.data[k] += g;
        break;
      }
      case Op::Conv1d: {
        const Mat<T>&X = nodes_[n.a].value, &W = nodes_[n.b].value;
        Mat<T>&gx = nodes_[n.a].grad, &gw = nodes_[n.b].grad, &gb = nodes_[n.c].grad;
        int kernel = n.i0, stride = n.i1, cin = X.rows;
        for (int o = 0; o < n.grad.rows; ++o)
          for (int j = 0; j < n.grad.cols; ++j) {
            T g = n.grad(o, j);
            if (g == T(0)) continue;
            gb(0, o) += g;
            for (int ci = 0; ci < cin; ++ci)
              for (int t = 0; t < kernel; ++t) {
                gw(o, ci * kernel + t) += g * X(ci, j * stride + t);
                gx(ci, j * stride + t) += g * W(o, ci * kernel + t);
              }
          }
        break;
      }
      case Op::SoftmaxRowsGuarded: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int i = 0; i < n.grad.rows; ++i) {
          // Guarded rows are constant zero, so they pass no gradient; they
          // are recognizable by an all-zero output row.
          T rowsum = T(0);
          for (int j = 0; j < n.grad.cols; ++j) rowsum += n.value(i, j);
          if (rowsum == T(0)) continue;
          T dotp = T(0);
          for (int j = 0; j < n.grad.cols; ++j) dotp += n.grad(i, j) * n.value(i, j);
          for (int j = 0; j < n.grad.cols; ++j)
            ga(i, j) += n.value(i, j) * (n.grad(i, j) - dotp);
        }
        break;
      }
      case Op::LogSoftmaxRows: {
        Mat<T>& ga = nodes_[n.a].grad;
        for (int i = 0; i < n.grad.rows; ++i) {
          T gsum = T(0);
          for (int j = 0; j < n.grad.cols; ++j) gsum += n.grad(i, j);
          for (int j = 0; j < n.grad.cols; ++j)
            ga(i, j) += n.grad(i, j) - std::exp(n.value(i, j)) * gsum;
        }
        break;
      }
    }
  }

  void accum(Ref r, const Mat<T>& g) {
    Mat<T>& dst = nodes_[r].grad;
    for (int k = 0; k < dst.size(); ++k) dst.data[k] += g.data[k];
  }

  std::vector<Node> nodes_;
};

}  // namespace crowdnav
