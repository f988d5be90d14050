#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "nn/graph.hpp"
#include "nn/params.hpp"

namespace crowdnav {

// Additive mask value for attention scores. Large enough that a masked slot
// never wins the softmax, and a fully masked row trips the guarded-softmax
// zero path. Scores are scaled by 1/sqrt(d) *before* the mask is added so
// this value reaches the softmax unattenuated.
constexpr double kMaskSentinel = -1e9;

// Parameter creation is split from graph wiring so shapes are declared once
// per network while the same weights can be wired into many step subgraphs.

template <typename T>
void ensure_linear(ParameterSet<T>* ps, const std::string& name, int in_dim, int out_dim) {
  if (ps->has(name + ".w")) return;
  ps->add(name + ".w", out_dim, in_dim);
  ps->add(name + ".b", 1, out_dim);
}

// y = x W^T + b with W stored [out x in].
template <typename T>
typename Graph<T>::Ref linear(Graph<T>* g, ParameterSet<T>* ps, const std::string& name,
                              typename Graph<T>::Ref x) {
  return g->add_row(g->matmul_nt(x, g->param(ps, name + ".w")),
                    g->param(ps, name + ".b"));
}

template <typename T>
void ensure_conv1d(ParameterSet<T>* ps, const std::string& name, int in_ch, int out_ch,
                   int kernel) {
  if (ps->has(name + ".w")) return;
  ps->add(name + ".w", out_ch, in_ch * kernel);
  ps->add(name + ".b", 1, out_ch);
}

template <typename T>
typename Graph<T>::Ref conv1d_block(Graph<T>* g, ParameterSet<T>* ps,
                                    const std::string& name, typename Graph<T>::Ref x,
                                    int kernel, int stride) {
  return g->conv1d(x, g->param(ps, name + ".w"), g->param(ps, name + ".b"), kernel,
                   stride);
}

template <typename T>
void ensure_gru(ParameterSet<T>* ps, const std::string& prefix, int in_dim, int width) {
  if (ps->has(prefix + ".w_ir")) return;
  for (const char* gate : {"r", "z", "n"}) {
    ps->add(prefix + ".w_i" + gate, width, in_dim);
    ps->add(prefix + ".w_h" + gate, width, width);
    ps->add(prefix + ".b_i" + gate, 1, width);
    ps->add(prefix + ".b_h" + gate, 1, width);
  }
}

// Gated recurrent unit cell:
//   r = sigmoid(x W_ir^T + b_ir + h W_hr^T + b_hr)
//   z = sigmoid(x W_iz^T + b_iz + h W_hz^T + b_hz)
//   n = tanh(x W_in^T + b_in + r * (h W_hn^T + b_hn))
//   h' = (1 - z) * n + z * h
// x and h are single rows (the recurrent state of one environment).
template <typename T>
typename Graph<T>::Ref gru_cell(Graph<T>* g, ParameterSet<T>* ps,
                                const std::string& prefix, typename Graph<T>::Ref x,
                                typename Graph<T>::Ref h) {
  auto gate_pre = [&](const char* gate) {
    std::string sg(gate);
    auto xi = g->add_row(g->matmul_nt(x, g->param(ps, prefix + ".w_i" + sg)),
                         g->param(ps, prefix + ".b_i" + sg));
    auto hh = g->add_row(g->matmul_nt(h, g->param(ps, prefix + ".w_h" + sg)),
                         g->param(ps, prefix + ".b_h" + sg));
    return std::pair{xi, hh};
  };
  auto [xr, hr] = gate_pre("r");
  auto r = g->sigmoid(g->add(xr, hr));
  auto [xz, hz] = gate_pre("z");
  auto z = g->sigmoid(g->add(xz, hz));
  auto xn = g->add_row(g->matmul_nt(x, g->param(ps, prefix + ".w_in")),
                       g->param(ps, prefix + ".b_in"));
  auto hn = g->add_row(g->matmul_nt(h, g->param(ps, prefix + ".w_hn")),
                       g->param(ps, prefix + ".b_hn"));
  auto n = g->tanh_op(g->add(xn, g->mul(r, hn)));

  int width = g->value(h).cols;
  Mat<T> ones_m(1, width);
  ones_m.fill(T(1));
  auto ones = g->constant(ones_m);
  return g->add(g->mul(g->sub(ones, z), n), g->mul(z, h));
}

// Scaled dot-product attention with an additive mask:
//   weights = guarded_softmax(Q K^T / sqrt(d) + mask),  out = weights V
// Mask entries are 0 for attendable slots and kMaskSentinel for padding.
// Rows with every slot masked produce zero weights and a zero output row.
template <typename T>
struct AttentionRefs {
  typename Graph<T>::Ref weights;
  typename Graph<T>::Ref out;
};

template <typename T>
AttentionRefs<T> masked_attention(Graph<T>* g, typename Graph<T>::Ref q,
                                  typename Graph<T>::Ref k, typename Graph<T>::Ref v,
                                  typename Graph<T>::Ref mask) {
  int d = g->value(q).cols;
  auto scores = g->scale(g->matmul_nt(q, k), static_cast<T>(1.0 / std::sqrt(double(d))));
  auto weights = g->softmax_rows_guarded(g->add(scores, mask));
  return {weights, g->matmul(weights, v)};
}

}  // namespace crowdnav
