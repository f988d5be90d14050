#pragma once

#include <array>
#include <string>
#include <vector>

#include "nn/blocks.hpp"
#include "nn/graph.hpp"
#include "nn/params.hpp"
#include "sim/env_interface.hpp"
#include "util/rng.hpp"

namespace crowdnav {

// Architecture variants. All share the same trunk (robot embedding, scan CNN,
// GRU, action/value heads); they differ in how the crowd is aggregated into
// the social feature that fills the first third of the GRU input.
enum class Variant {
  RhHh,     // human-human attention refined by robot-human attention
  RhOnly,   // robot-human attention straight over raw human states
  HhOnly,   // human-human attention, mean-pooled over visible humans
  NoAttn,   // per-human MLP embedding, mean-pooled
  HomoGat,  // one homogeneous self-attention over robot+humans+scan nodes
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct PolicyConfig {
  Variant variant = Variant::RhHh;

  int n_max = 20;     // padded human slots
  int robot_dim = 7;  // (px, py, ux, uy, gx, gy, heading)
  int human_dim = 4;  // (px, py, ux, uy)
  int scan_len = 90;

  int attn_dim = 64;   // width of attention embeddings
  int embed_dim = 64;  // width of the robot and scan features
  int gru_width = 128;
  int n_actions = 9;

  int cnn_ch1 = 8;
  int cnn_ch2 = 16;
  int cnn_kernel = 5;
  int cnn_stride = 2;

  double scan_normalizer = 6.0;  // scan enters the graph in meters

  // Additive score for invisible slots. Tests weaken this on purpose to show
  // the masking is what makes padding inert; leave it alone otherwise.
  double mask_fill = kMaskSentinel;

  int conv1_out() const { return (scan_len - cnn_kernel) / cnn_stride + 1; }
  int conv2_out() const { return (conv1_out() - cnn_kernel) / cnn_stride + 1; }
  int scan_flat() const { return cnn_ch2 * conv2_out(); }
  int gru_in() const { return attn_dim + 2 * embed_dim; }
};

// Graph handles for one policy step. Inputs are -1 when a variant does not
// use them; outputs are always present except the attention weights.
struct StepRefs {
  int robot = -1;      // 1 x robot_dim
  int humans = -1;     // n_max x human_dim
  int scan = -1;       // 1 x scan_len, meters
  int mask_cols = -1;  // n_max x n_max column visibility mask
  int mask_row = -1;   // 1 x n_max visibility mask
  int pool_row = -1;   // 1 x n_max mean-pool weights
  int mask_gat = -1;   // (n_max+2) x (n_max+2) node mask
  int hidden = -1;     // 1 x gru_width, supplied by the caller

  int logits = -1;       // 1 x n_actions
  int value = -1;        // 1 x 1
  int hidden_next = -1;  // 1 x gru_width
  int attn_rh = -1;      // 1 x n_max robot attention over humans, if any
  int attn_hh = -1;      // n_max x n_max human-human attention, if any
};

// Declares every tensor the variant needs and initializes weights with
// gain-sqrt(2) orthogonal draws (biases zero). Initialization walks tensors
// in sorted name order so a seed fixes the weights regardless of wiring.
template <typename T>
void ensure_policy_params(ParameterSet<T>* ps, const PolicyConfig& cfg, Rng* rng);

// Wires one policy step into the graph. `hidden` must be an existing ref
// (an input at act time, the previous step's masked output under BPTT).
// Fresh input nodes are created per call; parameters are shared by name.
template <typename T>
StepRefs build_policy_step(Graph<T>* g, ParameterSet<T>* ps, const PolicyConfig& cfg,
                           int hidden);

// Copies one observation into the step's input nodes (not the hidden state).
template <typename T>
void fill_step_inputs(Graph<T>* g, const StepRefs& r, const PolicyConfig& cfg,
                      const Observation& obs);

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  std::array<double, Action::kCount> probs{};
  std::vector<double> attn_rh;               // robot-to-human weights, may be empty
  std::vector<std::vector<double>> attn_hh;  // human-human weights, may be empty
};

// A policy with its own parameters and a single cached step graph that is
// refilled every act() call. The recurrent state lives with the caller so
// one policy can serve many environments.
template <typename T>
class PolicyNetwork {
 public:
  PolicyNetwork(const PolicyConfig& cfg, uint64_t init_seed);

  const PolicyConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  Mat<T> initial_hidden() const { return Mat<T>(1, cfg_.gru_width); }

  // Samples from the action distribution (or takes the argmax when greedy;
  // ties resolve to the lowest action index). Updates *hidden in place.
  ActResult act(const Observation& obs, Mat<T>* hidden, Rng* rng, bool greedy = false);

 private:
  PolicyConfig cfg_;
  ParameterSet<T> params_;
  Graph<T> graph_;
  StepRefs refs_;
};

extern template class PolicyNetwork<double>;
extern template class PolicyNetwork<float>;
extern template void ensure_policy_params<double>(ParameterSet<double>*,
                                                  const PolicyConfig&, Rng*);
extern template void ensure_policy_params<float>(ParameterSet<float>*,
                                                 const PolicyConfig&, Rng*);
extern template StepRefs build_policy_step<double>(Graph<double>*, ParameterSet<double>*,
                                                   const PolicyConfig&, int);
extern template StepRefs build_policy_step<float>(Graph<float>*, ParameterSet<float>*,
                                                  const PolicyConfig&, int);
extern template void fill_step_inputs<double>(Graph<double>*, const StepRefs&,
                                              const PolicyConfig&, const Observation&);
extern template void fill_step_inputs<float>(Graph<float>*, const StepRefs&,
                                             const PolicyConfig&, const Observation&);

}  // namespace crowdnav
