#include "verify/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <utility>

#include "nn/grad_check.hpp"
#include "policy/policy.hpp"
#include "rl/gae.hpp"
#include "sim/crowd_env.hpp"
#include "sim/orca.hpp"
#include "util/rng.hpp"
#include "verify/oracles.hpp"

namespace crowdnav {

namespace {

PolicyConfig check_cfg() {
  PolicyConfig cfg;
  cfg.n_max = 4;
  cfg.scan_len = 18;
  cfg.attn_dim = 8;
  cfg.embed_dim = 8;
  cfg.gru_width = 8;
  cfg.cnn_ch1 = 2;
  cfg.cnn_ch2 = 3;
  return cfg;
}

Observation random_obs(const PolicyConfig& cfg, int n_vis, Rng* rng) {
  Observation o;
  for (double& x : o.robot) x = rng->uniform(-3.0, 3.0);
  o.humans.assign(cfg.n_max, {0.0, 0.0, 0.0, 0.0});
  o.visibility.assign(cfg.n_max, 0);
  for (int i = 0; i < n_vis; ++i) {
    o.humans[i] = {rng->uniform(-4.0, 4.0), rng->uniform(-4.0, 4.0),
                   rng->uniform(-0.5, 0.5), rng->uniform(-0.5, 0.5)};
    o.visibility[i] = 1;
  }
  o.n_visible = n_vis;
  o.scan.resize(cfg.scan_len);
  for (double& s : o.scan) s = rng->uniform(0.3, 6.0);
  o.scan_max_range = 6.0;
  return o;
}

CheckResult check_raycast(uint64_t seed) {
  CheckResult r{"raycast-vs-stepping-oracle", false, 0.0, 1e-3, "100 rays"};
  Rng rng(seed);
  for (int i = 0; i < 100; ++i) {
    Scene scene = sample_scene(rng.next_u64(), 3 + i % 6, {});
    const double H = scene.arena_half_extent - 0.2;
    Vec2 origin{rng.uniform(-H, H), rng.uniform(-H, H)};
    double angle = rng.uniform(-3.141592653589793, 3.141592653589793);
    double fast = raycast_single(scene, origin, angle, 6.0);
    double slow = raycast_stepping_oracle(scene, origin, angle, 6.0);
    r.worst = std::max(r.worst, std::abs(fast - slow));
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

CheckResult check_orca(uint64_t seed) {
  CheckResult r{"orca-two-agent-separation", false, 0.0, 0.95,
                "50 scenarios + symmetric head-on, pass fraction vs threshold"};
  OrcaParams params;
  auto run_pair = [&](Vec2 pa, Vec2 pb) {
    OrcaAgent a{pa, {0, 0}, 0.3}, b{pb, {0, 0}, 0.3};
    Vec2 ga = pb, gb = pa;
    double min_sep = 1e9;
    for (int t = 0; t < 200; ++t) {
      Vec2 va = orca_velocity(a, pref_velocity(a.position, ga, 0.5, 0.1), 0.5, {b}, {}, params);
      Vec2 vb = orca_velocity(b, pref_velocity(b.position, gb, 0.5, 0.1), 0.5, {a}, {}, params);
      a.velocity = va;
      b.velocity = vb;
      a.position = {a.position.x + va.x * 0.1, a.position.y + va.y * 0.1};
      b.position = {b.position.x + vb.x * 0.1, b.position.y + vb.y * 0.1};
      min_sep = std::min(min_sep, std::hypot(a.position.x - b.position.x,
                                             a.position.y - b.position.y));
    }
    return min_sep;
  };

  Rng rng(seed);
  int safe = 0;
  for (int i = 0; i < 50; ++i) {
    Vec2 pa{rng.uniform(-3.0, -2.0), rng.uniform(-1.0, 1.0)};
    Vec2 pb{rng.uniform(2.0, 3.0), rng.uniform(-1.0, 1.0)};
    if (run_pair(pa, pb) >= 0.6) ++safe;
  }
  const double head_on = run_pair({-2.0, 0.0}, {2.0, 0.0});
  r.worst = safe / 50.0;
  r.pass = r.worst >= r.tolerance && head_on >= 0.6 - 1e-3;
  r.detail += head_on >= 0.6 - 1e-3 ? " (head-on ok)" : " (head-on VIOLATED)";
  return r;
}

CheckResult check_reward() {
  CheckResult r{"reward-worked-examples", false, 0.0, 1e-12, "12 states"};
  struct Row {
    RewardInputs in;
    double expect;
  };
  const Row rows[] = {
      {{0.0, 0.2, 1.0, 1.0, true, false}, 19.925},
      {{0.0, 1.0, 0.10, 0.0, false, false}, -0.175},
      {{2.0, 1.95, 1.0, 0.0, false, false}, 0.175},
      {{1.0, 1.0, 0.5, 0.5, false, true}, -20.0375},
      {{1.0, 1.0, 0.0, 0.0, false, false}, -20.025},
      {{0.0, 0.25, 0.12, 0.0, true, false}, 19.975},
      {{0.0, 0.29, 0.5, 0.0, true, true}, 19.975},
      {{1.0, 1.1, 1.0, 0.0, false, false}, -0.425},
      {{1.0, 1.0, 0.249, -1.0, false, false}, -0.076},
      {{1.3, 1.2, 0.25, 0.0, false, false}, 0.375},
      {{1.0, 1.0, 1.0, 0.3, false, false}, -0.0295},
      {{1.0, 1.0, 0.24, -0.8, false, false}, -0.067},
  };
  for (const Row& row : rows)
    r.worst = std::max(r.worst, std::abs(compute_reward(row.in).total() - row.expect));
  r.pass = r.worst <= r.tolerance;
  return r;
}

CheckResult check_gae(uint64_t seed) {
  CheckResult r{"gae-vs-brute-force", false, 0.0, 1e-6, "20 random buffers, 2x10"};
  Rng rng(seed);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2, T = 10;
    const double gamma = rng.uniform(0.9, 0.999), lambda = rng.uniform(0.0, 1.0);
    Mat<double> rewards(n, T), dones(n, T), values(n, T + 1);
    for (int e = 0; e < n; ++e) {
      for (int t = 0; t < T; ++t) {
        rewards(e, t) = rng.uniform(-2.0, 2.0);
        dones(e, t) = rng.uniform01() < 0.2 ? 1.0 : 0.0;
        values(e, t) = rng.uniform(-1.0, 1.0);
      }
      values(e, T) = rng.uniform(-1.0, 1.0);
    }
    GaeOut out = compute_gae(rewards, dones, values, gamma, lambda);
    for (int e = 0; e < n; ++e)
      for (int t = 0; t < T; ++t) {
        double acc = 0.0, coef = 1.0;
        for (int l = t; l < T; ++l) {
          const double nd = 1.0 - dones(e, l);
          acc += coef * (rewards(e, l) + gamma * values(e, l + 1) * nd - values(e, l));
          coef *= gamma * lambda * nd;
          if (coef == 0.0) break;
        }
        r.worst = std::max(r.worst, std::abs(out.advantages(e, t) - acc));
      }
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

CheckResult check_gradients(uint64_t seed) {
  CheckResult r{"autodiff-vs-finite-differences", false, 0.0, 1e-4,
                "full forward pass, 20 probes, h=1e-5"};
  PolicyConfig cfg = check_cfg();
  ParameterSet<double> ps;
  Rng init_rng(seed);
  ensure_policy_params(&ps, cfg, &init_rng);

  Graph<double> g;
  int h0 = g.input(1, cfg.gru_width);
  StepRefs refs = build_policy_step(&g, &ps, cfg, h0);
  int loss = g.add(g.sum(g.square(refs.logits)),
                   g.add(g.sum(g.square(refs.value)), g.sum(g.square(refs.hidden_next))));

  Rng rng(seed + 1);
  Observation obs = random_obs(cfg, 3, &rng);
  fill_step_inputs(&g, refs, cfg, obs);
  Mat<double> h(1, cfg.gru_width);
  for (double& x : h.data) x = rng.uniform(-0.5, 0.5);
  g.set_value(h0, h);

  auto loss_fn = [&](bool with_grad) {
    g.forward();
    if (with_grad) g.backward(loss);
    return g.value(loss)(0, 0);
  };
  GradCheckReport rep = grad_check(&ps, loss_fn, 20, seed + 2);
  r.worst = rep.max_rel_err;
  r.pass = r.worst <= r.tolerance;
  return r;
}

CheckResult check_mask(uint64_t seed, bool corrupt) {
  CheckResult r{"mask-elimination", false, 0.0, 1e-5, "20 observations"};
  PolicyConfig cfg = check_cfg();
  if (corrupt) {
    cfg.mask_fill = -1.0;
    r.detail += " (sentinel corrupted on purpose)";
  }
  ParameterSet<double> ps;
  Rng init_rng(seed);
  ensure_policy_params(&ps, cfg, &init_rng);
  Graph<double> g;
  int h0 = g.input(1, cfg.gru_width);
  StepRefs refs = build_policy_step(&g, &ps, cfg, h0);
  Mat<double> h(1, cfg.gru_width);
  g.set_value(h0, h);

  Rng rng(seed + 9);
  for (int i = 0; i < 20; ++i) {
    Observation obs = random_obs(cfg, i % (cfg.n_max), &rng);
    fill_step_inputs(&g, refs, cfg, obs);
    g.forward();
    Mat<double> logits = g.value(refs.logits);
    Mat<double> value = g.value(refs.value);

    Observation garbled = obs;
    for (int k = obs.n_visible; k < cfg.n_max; ++k)
      garbled.humans[k] = {rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0),
                           rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0)};
    fill_step_inputs(&g, refs, cfg, garbled);
    g.forward();
    for (int a = 0; a < logits.cols; ++a)
      r.worst = std::max(r.worst, std::abs(g.value(refs.logits)(0, a) - logits(0, a)));
    r.worst = std::max(r.worst, std::abs(g.value(refs.value)(0, 0) - value(0, 0)));
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

CheckResult check_permutation(uint64_t seed) {
  CheckResult r{"permutation-invariance", false, 0.0, 1e-5, "20 observations"};
  PolicyConfig cfg = check_cfg();
  ParameterSet<double> ps;
  Rng init_rng(seed);
  ensure_policy_params(&ps, cfg, &init_rng);
  Graph<double> g;
  int h0 = g.input(1, cfg.gru_width);
  StepRefs refs = build_policy_step(&g, &ps, cfg, h0);
  Mat<double> h(1, cfg.gru_width);
  for (double& x : h.data) x = 0.1;
  g.set_value(h0, h);

  Rng rng(seed + 77);
  for (int i = 0; i < 20; ++i) {
    const int n_vis = 2 + i % 3;
    Observation obs = random_obs(cfg, n_vis, &rng);
    fill_step_inputs(&g, refs, cfg, obs);
    g.forward();
    Mat<double> logits = g.value(refs.logits);
    Mat<double> value = g.value(refs.value);

    Observation perm = obs;
    std::vector<int> order(n_vis);
    for (int k = 0; k < n_vis; ++k) order[k] = k;
    for (int k = n_vis - 1; k > 0; --k)
      std::swap(order[k], order[rng.uniform_int(0, k)]);
    for (int k = 0; k < n_vis; ++k) perm.humans[k] = obs.humans[order[k]];
    fill_step_inputs(&g, refs, cfg, perm);
    g.forward();
    for (int a = 0; a < logits.cols; ++a)
      r.worst = std::max(r.worst, std::abs(g.value(refs.logits)(0, a) - logits(0, a)));
    r.worst = std::max(r.worst, std::abs(g.value(refs.value)(0, 0) - value(0, 0)));
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

}  // namespace

std::vector<CheckResult> run_verify_checks(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(check_raycast(opt.seed));
  out.push_back(check_orca(opt.seed + 1));
  out.push_back(check_reward());
  out.push_back(check_gae(opt.seed + 2));
  out.push_back(check_gradients(opt.seed + 3));
  out.push_back(check_mask(opt.seed + 4, opt.corrupt_mask_sentinel));
  out.push_back(check_permutation(opt.seed + 5));
  return out;
}

int print_verify_report(const std::vector<CheckResult>& results, std::ostream& out) {
  int failed = 0;
  for (const CheckResult& r : results) {
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] %-32s worst %10.3e  tol %10.3e   %s\n",
                  r.pass ? "PASS" : "FAIL", r.name.c_str(), r.worst, r.tolerance,
                  r.detail.c_str());
    out << line;
    if (!r.pass) ++failed;
  }
  out << results.size() << " checks: " << (results.size() - failed) << " passed, "
      << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace crowdnav
