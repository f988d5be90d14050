#include "policy/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdnav {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::RhHh: return "rh_hh";
    case Variant::RhOnly: return "rh_only";
    case Variant::HhOnly: return "hh_only";
    case Variant::NoAttn: return "no_attn";
    case Variant::HomoGat: return "homo_gat";
  }
  throw std::logic_error("bad variant enum");
}

Variant variant_from_string(const std::string& s) {
  if (s == "rh_hh") return Variant::RhHh;
  if (s == "rh_only") return Variant::RhOnly;
  if (s == "hh_only") return Variant::HhOnly;
  if (s == "no_attn") return Variant::NoAttn;
  if (s == "homo_gat") return Variant::HomoGat;
  throw std::invalid_argument("unknown policy variant: " + s);
}

template <typename T>
void ensure_policy_params(ParameterSet<T>* ps, const PolicyConfig& cfg, Rng* rng) {
  const int d = cfg.attn_dim, e = cfg.embed_dim, h = cfg.gru_width;

  ensure_linear(ps, "robot_embed", cfg.robot_dim, e);
  ensure_conv1d(ps, "scan.conv1", 1, cfg.cnn_ch1, cfg.cnn_kernel);
  ensure_conv1d(ps, "scan.conv2", cfg.cnn_ch1, cfg.cnn_ch2, cfg.cnn_kernel);
  ensure_linear(ps, "scan.fc", cfg.scan_flat(), e);
  ensure_gru(ps, "gru", cfg.gru_in(), h);
  ensure_linear(ps, "pi", h, cfg.n_actions);
  ensure_linear(ps, "v", h, 1);

  switch (cfg.variant) {
    case Variant::RhHh:
      for (const char* n : {"hh.q", "hh.k", "hh.v"}) ensure_linear(ps, n, cfg.human_dim, d);
      ensure_linear(ps, "rh.q", cfg.robot_dim, d);
      ensure_linear(ps, "rh.k", d, d);
      ensure_linear(ps, "rh.v", d, d);
      break;
    case Variant::RhOnly:
      ensure_linear(ps, "rh.q", cfg.robot_dim, d);
      ensure_linear(ps, "rh.k", cfg.human_dim, d);
      ensure_linear(ps, "rh.v", cfg.human_dim, d);
      break;
    case Variant::HhOnly:
      for (const char* n : {"hh.q", "hh.k", "hh.v"}) ensure_linear(ps, n, cfg.human_dim, d);
      break;
    case Variant::NoAttn:
      ensure_linear(ps, "human_embed", cfg.human_dim, d);
      break;
    case Variant::HomoGat:
      ensure_linear(ps, "gat.robot", cfg.robot_dim, d);
      ensure_linear(ps, "gat.human", cfg.human_dim, d);
      ensure_linear(ps, "gat.q", d, d);
      ensure_linear(ps, "gat.k", d, d);
      ensure_linear(ps, "gat.v", d, d);
      break;
  }

  // Weight matrices get orthogonal frames, biases stay zero. Weights are the
  // tensors whose last name component starts with 'w' ("fc.w", "gru.w_ir").
  // Sorted order makes the draws a pure function of the seed and name set.
  const double gain = std::sqrt(2.0);
  for (const std::string& name : ps->names()) {
    size_t dot = name.rfind('.');
    if (dot != std::string::npos && dot + 1 < name.size() && name[dot + 1] == 'w')
      orthogonal_init(&ps->value(name), rng, gain);
  }
}

namespace {

// v_R: embed the 7-tuple robot state.
template <typename T>
int robot_feature(Graph<T>* g, ParameterSet<T>* ps, int robot) {
  return g->tanh_op(linear(g, ps, "robot_embed", robot));
}

// v_O: normalize the scan, run the two-stage CNN, project to embed_dim.
template <typename T>
int scan_feature(Graph<T>* g, ParameterSet<T>* ps, const PolicyConfig& cfg, int scan) {
  auto x = g->scale(scan, static_cast<T>(1.0 / cfg.scan_normalizer));
  auto c1 = g->relu(conv1d_block(g, ps, "scan.conv1", x, cfg.cnn_kernel, cfg.cnn_stride));
  auto c2 = g->relu(conv1d_block(g, ps, "scan.conv2", c1, cfg.cnn_kernel, cfg.cnn_stride));
  return g->tanh_op(linear(g, ps, "scan.fc", g->flatten(c2)));
}

// Human-human self-attention over the padded slots; the column mask keeps
// invisible humans out of every softmax.
template <typename T>
AttentionRefs<T> human_human(Graph<T>* g, ParameterSet<T>* ps, int humans, int mask_cols) {
  auto q = linear(g, ps, "hh.q", humans);
  auto k = linear(g, ps, "hh.k", humans);
  auto v = linear(g, ps, "hh.v", humans);
  return masked_attention(g, q, k, v, mask_cols);
}

}  // namespace

template <typename T>
StepRefs build_policy_step(Graph<T>* g, ParameterSet<T>* ps, const PolicyConfig& cfg,
                           int hidden) {
  StepRefs r;
  r.hidden = hidden;
  r.robot = g->input(1, cfg.robot_dim);
  r.humans = g->input(cfg.n_max, cfg.human_dim);
  r.scan = g->input(1, cfg.scan_len);

  auto v_r = robot_feature(g, ps, r.robot);
  auto v_o = scan_feature(g, ps, cfg, r.scan);

  int social = -1;
  switch (cfg.variant) {
    case Variant::RhHh: {
      r.mask_cols = g->input(cfg.n_max, cfg.n_max);
      r.mask_row = g->input(1, cfg.n_max);
      auto hh = human_human(g, ps, r.humans, r.mask_cols);
      r.attn_hh = hh.weights;
      auto q = linear(g, ps, "rh.q", r.robot);
      auto k = linear(g, ps, "rh.k", hh.out);
      auto v = linear(g, ps, "rh.v", hh.out);
      auto rh = masked_attention(g, q, k, v, r.mask_row);
      r.attn_rh = rh.weights;
      social = rh.out;
      break;
    }
    case Variant::RhOnly: {
      r.mask_row = g->input(1, cfg.n_max);
      auto q = linear(g, ps, "rh.q", r.robot);
      auto k = linear(g, ps, "rh.k", r.humans);
      auto v = linear(g, ps, "rh.v", r.humans);
      auto rh = masked_attention(g, q, k, v, r.mask_row);
      r.attn_rh = rh.weights;
      social = rh.out;
      break;
    }
    case Variant::HhOnly: {
      r.mask_cols = g->input(cfg.n_max, cfg.n_max);
      r.pool_row = g->input(1, cfg.n_max);
      auto hh = human_human(g, ps, r.humans, r.mask_cols);
      r.attn_hh = hh.weights;
      social = g->matmul(r.pool_row, hh.out);
      break;
    }
    case Variant::NoAttn: {
      r.pool_row = g->input(1, cfg.n_max);
      auto emb = g->tanh_op(linear(g, ps, "human_embed", r.humans));
      social = g->matmul(r.pool_row, emb);
      break;
    }
    case Variant::HomoGat: {
      if (cfg.attn_dim != cfg.embed_dim)
        throw std::invalid_argument("homo_gat needs attn_dim == embed_dim (shared nodes)");
      r.mask_gat = g->input(cfg.n_max + 2, cfg.n_max + 2);
      auto robot_node = g->tanh_op(linear(g, ps, "gat.robot", r.robot));
      auto human_nodes = g->tanh_op(linear(g, ps, "gat.human", r.humans));
      auto nodes = g->concat_rows(g->concat_rows(robot_node, human_nodes), v_o);
      auto q = linear(g, ps, "gat.q", nodes);
      auto k = linear(g, ps, "gat.k", nodes);
      auto v = linear(g, ps, "gat.v", nodes);
      auto gat = masked_attention(g, q, k, v, r.mask_gat);
      // The robot node's refined embedding stands in as the social feature;
      // its attention row over the human slots is exported for replay.
      social = g->row(gat.out, 0);
      r.attn_rh = g->slice_cols(g->row(gat.weights, 0), 1, cfg.n_max + 1);
      break;
    }
  }

  auto gru_x = g->concat_cols(g->concat_cols(social, v_r), v_o);
  r.hidden_next = gru_cell(g, ps, "gru", gru_x, hidden);
  r.logits = linear(g, ps, "pi", r.hidden_next);
  r.value = linear(g, ps, "v", r.hidden_next);
  return r;
}

template <typename T>
void fill_step_inputs(Graph<T>* g, const StepRefs& r, const PolicyConfig& cfg,
                      const Observation& obs) {
  if (static_cast<int>(obs.humans.size()) != cfg.n_max ||
      static_cast<int>(obs.scan.size()) != cfg.scan_len)
    throw std::invalid_argument("observation does not match policy dimensions");

  Mat<T> robot(1, cfg.robot_dim);
  for (int j = 0; j < cfg.robot_dim; ++j) robot(0, j) = static_cast<T>(obs.robot[j]);
  g->set_value(r.robot, robot);

  Mat<T> humans(cfg.n_max, cfg.human_dim);
  for (int i = 0; i < cfg.n_max; ++i)
    for (int j = 0; j < cfg.human_dim; ++j)
      humans(i, j) = static_cast<T>(obs.humans[i][j]);
  g->set_value(r.humans, humans);

  Mat<T> scan(1, cfg.scan_len);
  for (int j = 0; j < cfg.scan_len; ++j) scan(0, j) = static_cast<T>(obs.scan[j]);
  g->set_value(r.scan, scan);

  const T fill = static_cast<T>(cfg.mask_fill);
  auto visible = [&](int i) { return obs.visibility[i] != 0; };

  if (r.mask_row >= 0) {
    Mat<T> m(1, cfg.n_max);
    for (int j = 0; j < cfg.n_max; ++j) m(0, j) = visible(j) ? T(0) : fill;
    g->set_value(r.mask_row, m);
  }
  if (r.mask_cols >= 0) {
    Mat<T> m(cfg.n_max, cfg.n_max);
    for (int i = 0; i < cfg.n_max; ++i)
      for (int j = 0; j < cfg.n_max; ++j) m(i, j) = visible(j) ? T(0) : fill;
    g->set_value(r.mask_cols, m);
  }
  if (r.pool_row >= 0) {
    Mat<T> m(1, cfg.n_max);
    int k = 0;
    for (int j = 0; j < cfg.n_max; ++j) k += visible(j) ? 1 : 0;
    if (k > 0)
      for (int j = 0; j < cfg.n_max; ++j) m(0, j) = visible(j) ? T(1) / T(k) : T(0);
    g->set_value(r.pool_row, m);
  }
  if (r.mask_gat >= 0) {
    const int n = cfg.n_max + 2;  // node 0 robot, 1..n_max humans, n_max+1 scan
    Mat<T> m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 1; j <= cfg.n_max; ++j)
        if (!visible(j - 1)) m(i, j) = fill;
    g->set_value(r.mask_gat, m);
  }
}

template <typename T>
PolicyNetwork<T>::PolicyNetwork(const PolicyConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  Rng rng(init_seed);
  ensure_policy_params(&params_, cfg_, &rng);
  refs_ = build_policy_step(&graph_, &params_, cfg_, graph_.input(1, cfg_.gru_width));
}

template <typename T>
ActResult PolicyNetwork<T>::act(const Observation& obs, Mat<T>* hidden, Rng* rng,
                                bool greedy) {
  if (!hidden || !hidden->same_shape(Mat<T>(1, cfg_.gru_width)))
    throw std::invalid_argument("hidden state has the wrong shape");
  fill_step_inputs(&graph_, refs_, cfg_, obs);
  graph_.set_value(refs_.hidden, *hidden);
  graph_.forward();

  ActResult out;
  out.value = static_cast<double>(graph_.value(refs_.value)(0, 0));

  // The distribution is computed in double no matter the parameter type so
  // sampling thresholds are stable across precisions.
  const Mat<T>& logits = graph_.value(refs_.logits);
  double mx = static_cast<double>(logits(0, 0));
  for (int a = 1; a < cfg_.n_actions; ++a)
    mx = std::max(mx, static_cast<double>(logits(0, a)));
  double denom = 0.0;
  for (int a = 0; a < cfg_.n_actions; ++a)
    denom += std::exp(static_cast<double>(logits(0, a)) - mx);
  for (int a = 0; a < cfg_.n_actions; ++a)
    out.probs[a] = std::exp(static_cast<double>(logits(0, a)) - mx) / denom;

  if (greedy) {
    int best = 0;
    for (int a = 1; a < cfg_.n_actions; ++a)
      if (out.probs[a] > out.probs[best]) best = a;
    out.action = best;
  } else {
    double u = rng->uniform01(), cum = 0.0;
    int pick = cfg_.n_actions - 1;
    for (int a = 0; a < cfg_.n_actions; ++a) {
      cum += out.probs[a];
      if (u < cum) {
        pick = a;
        break;
      }
    }
    out.action = pick;
  }
  // Same expression shape as the graph's log-softmax so importance ratios
  // computed against this value start at exactly 1.
  const double lse = mx + std::log(denom);
  out.log_prob = static_cast<double>(logits(0, out.action)) - lse;

  *hidden = graph_.value(refs_.hidden_next);

  if (refs_.attn_rh >= 0) {
    const Mat<T>& w = graph_.value(refs_.attn_rh);
    out.attn_rh.resize(cfg_.n_max);
    for (int j = 0; j < cfg_.n_max; ++j) out.attn_rh[j] = static_cast<double>(w(0, j));
  }
  if (refs_.attn_hh >= 0) {
    const Mat<T>& w = graph_.value(refs_.attn_hh);
    out.attn_hh.assign(cfg_.n_max, std::vector<double>(cfg_.n_max, 0.0));
    for (int i = 0; i < cfg_.n_max; ++i)
      for (int j = 0; j < cfg_.n_max; ++j) out.attn_hh[i][j] = static_cast<double>(w(i, j));
  }
  return out;
}

template class PolicyNetwork<double>;
template class PolicyNetwork<float>;
template void ensure_policy_params<double>(ParameterSet<double>*, const PolicyConfig&,
                                           Rng*);
template void ensure_policy_params<float>(ParameterSet<float>*, const PolicyConfig&, Rng*);
template StepRefs build_policy_step<double>(Graph<double>*, ParameterSet<double>*,
                                            const PolicyConfig&, int);
template StepRefs build_policy_step<float>(Graph<float>*, ParameterSet<float>*,
                                           const PolicyConfig&, int);
template void fill_step_inputs<double>(Graph<double>*, const StepRefs&, const PolicyConfig&,
                                       const Observation&);
template void fill_step_inputs<float>(Graph<float>*, const StepRefs&, const PolicyConfig&,
                                      const Observation&);

}  // namespace crowdnav
