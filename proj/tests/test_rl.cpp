#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "policy/policy.hpp"
#include "rl/adam.hpp"
#include "rl/gae.hpp"
#include "rl/ppo.hpp"
#include "sim/crowd_env.hpp"
#include "util/rng.hpp"

using namespace crowdnav;
namespace fs = std::filesystem;

namespace {

PolicyConfig small_cfg(Variant v = Variant::RhHh) {
  PolicyConfig cfg;
  cfg.variant = v;
  cfg.n_max = 4;
  cfg.scan_len = 18;
  cfg.attn_dim = 8;
  cfg.embed_dim = 8;
  cfg.gru_width = 8;
  cfg.cnn_ch1 = 2;
  cfg.cnn_ch2 = 3;
  return cfg;
}

// One-state contextual bandit behind the environment seam: action kGood pays
// 1 and terminates as a success, everything else pays 0 and times out.
class BanditEnv : public EnvInterface {
 public:
  static constexpr int kGood = 4;

  explicit BanditEnv(const PolicyConfig& pcfg) {
    obs_.robot = {0.5, -0.25, 0.1, 0.05, 1.0, -1.0, 0.3};
    obs_.humans.assign(pcfg.n_max, {0.0, 0.0, 0.0, 0.0});
    obs_.visibility.assign(pcfg.n_max, 0);
    obs_.n_visible = 0;
    obs_.scan.assign(pcfg.scan_len, 4.0);
    obs_.scan_max_range = 6.0;
  }

  Observation reset() override { return obs_; }
  Observation observe() const override { return obs_; }

  std::pair<Observation, StepOutcome> step(int action_index) override {
    StepOutcome out;
    out.terminal = true;
    if (action_index == kGood) {
      out.reward = 1.0;
      out.reason = TerminationReason::Goal;
    } else {
      out.reward = 0.0;
      out.reason = TerminationReason::Timeout;
    }
    return {obs_, out};
  }

  std::string serialize_state() const override { return "{}"; }
  void restore_state(const std::string&) override {}

 private:
  Observation obs_;
};

EnvFactory bandit_factory(const PolicyConfig& pcfg) {
  return [pcfg](int, uint64_t) { return std::make_unique<BanditEnv>(pcfg); };
}

std::string fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("crowdnav_rl_" + tag);
  fs::remove_all(p);
  return p.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

double delta_at(const Mat<double>& r, const Mat<double>& d, const Mat<double>& v,
                double gamma, int e, int t) {
  return r(e, t) + gamma * v(e, t + 1) * (1.0 - d(e, t)) - v(e, t);
}

}  // namespace

TEST_CASE("gae matches a forward-sum oracle on random buffers") {
  const int n = 3, T = 10;
  const double gamma = 0.97, lambda = 0.9;
  Rng rng(301);
  Mat<double> rewards(n, T), dones(n, T), values(n, T + 1);
  for (int e = 0; e < n; ++e) {
    for (int t = 0; t < T; ++t) {
      rewards(e, t) = rng.uniform(-2.0, 2.0);
      dones(e, t) = rng.uniform01() < 0.25 ? 1.0 : 0.0;
      values(e, t) = rng.uniform(-1.0, 1.0);
    }
    values(e, T) = rng.uniform(-1.0, 1.0);
  }

  GaeOut out = compute_gae(rewards, dones, values, gamma, lambda);

  // Oracle expands the recursion into an explicit discounted sum of deltas,
  // with the running product of continuation masks cutting at terminals.
  for (int e = 0; e < n; ++e) {
    for (int t = 0; t < T; ++t) {
      double acc = 0.0, coef = 1.0;
      for (int l = t; l < T; ++l) {
        acc += coef * delta_at(rewards, dones, values, gamma, e, l);
        coef *= gamma * lambda * (1.0 - dones(e, l));
        if (coef == 0.0) break;
      }
      CHECK(out.advantages(e, t) == doctest::Approx(acc).epsilon(1e-6));
      CHECK(out.returns(e, t) ==
            doctest::Approx(out.advantages(e, t) + values(e, t)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gae lambda limits collapse to the closed forms") {
  const int n = 2, T = 8;
  const double gamma = 0.99;
  Rng rng(302);
  Mat<double> rewards(n, T), dones(n, T), values(n, T + 1);
  for (int e = 0; e < n; ++e) {
    for (int t = 0; t < T; ++t) {
      rewards(e, t) = rng.uniform(-1.0, 1.0);
      dones(e, t) = (e == 0 && t == 3) ? 1.0 : 0.0;
      values(e, t) = rng.uniform(-1.0, 1.0);
    }
    values(e, T) = rng.uniform(-1.0, 1.0);
  }

  SUBCASE("lambda zero reduces to the one-step td error, bitwise") {
    GaeOut out = compute_gae(rewards, dones, values, gamma, 0.0);
    for (int e = 0; e < n; ++e)
      for (int t = 0; t < T; ++t)
        CHECK(out.advantages(e, t) == delta_at(rewards, dones, values, gamma, e, t));
  }

  SUBCASE("lambda one without terminals is the full discounted return") {
    dones.zero();
    GaeOut out = compute_gae(rewards, dones, values, gamma, 1.0);
    for (int e = 0; e < n; ++e) {
      for (int t = 0; t < T; ++t) {
        double ret = 0.0, disc = 1.0;
        for (int k = t; k < T; ++k) {
          ret += disc * rewards(e, k);
          disc *= gamma;
        }
        ret += disc * values(e, T);
        CHECK(out.advantages(e, t) == doctest::Approx(ret - values(e, t)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("a terminal step reduces the advantage to reward minus value") {
  Mat<double> rewards(1, 1, {1.75}), dones(1, 1, {1.0}), values(1, 2, {0.4, 9.9});
  GaeOut out = compute_gae(rewards, dones, values, 0.99, 0.95);
  CHECK(out.advantages(0, 0) == 1.75 - 0.4);
  CHECK(out.returns(0, 0) == out.advantages(0, 0) + 0.4);
}

TEST_CASE("gae rejects inconsistent buffer shapes") {
  Mat<double> r(2, 5), d(2, 5), v_bad(2, 5), v_ok(2, 6);
  CHECK_THROWS_AS(compute_gae(r, d, v_bad, 0.99, 0.95), std::invalid_argument);
  CHECK_NOTHROW(compute_gae(r, d, v_ok, 0.99, 0.95));
}

TEST_CASE("advantage normalization hits zero mean and unit variance") {
  Rng rng(303);
  Mat<double> adv(4, 25);
  for (double& x : adv.data) x = rng.uniform(-3.0, 7.0);
  normalize_advantages(&adv);

  double mean = 0.0;
  for (double x : adv.data) mean += x;
  mean /= adv.size();
  double var = 0.0;
  for (double x : adv.data) var += (x - mean) * (x - mean);
  var /= adv.size();
  CHECK(std::abs(mean) <= 1e-9);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));

  // A constant buffer must stay finite thanks to the epsilon guard.
  Mat<double> flat(2, 3);
  flat.fill(5.0);
  normalize_advantages(&flat);
  for (double x : flat.data) CHECK(x == 0.0);
}

TEST_CASE("learning rate decays linearly and hits the documented midpoint") {
  CHECK(linear_lr(5e-5, 0, 1'000'000) == 5e-5);
  CHECK(linear_lr(5e-5, 500'000, 1'000'000) == 2.5e-5);
  CHECK(linear_lr(5e-5, 1'000'000, 1'000'000) == 0.0);
  CHECK(linear_lr(5e-5, 2'000'000, 1'000'000) == 0.0);  // floored, never negative
  CHECK(linear_lr(3e-4, 123, 0) == 3e-4);               // no budget, no decay
}

TEST_CASE("adam first step matches the bias-corrected closed form") {
  ParameterSet<double> ps;
  ps.add("w", 1, 2) = Mat<double>(1, 2, {1.0, 2.0});
  ps.grad("w") = Mat<double>(1, 2, {0.5, -0.25});

  Adam<double> adam;
  adam.init(ps);
  adam.step(&ps, 0.1);

  // After bias correction the first step is lr * g / (|g| + eps).
  CHECK(ps.value("w")(0, 0) ==
        doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(ps.value("w")(0, 1) ==
        doctest::Approx(2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
  CHECK(adam.t == 1);

  // From a fresh optimizer state, zero gradients move nothing: both moments
  // stay zero so the step is exactly zero.
  Adam<double> fresh;
  fresh.init(ps);
  const double before0 = ps.value("w")(0, 0), before1 = ps.value("w")(0, 1);
  ps.zero_grads();
  fresh.step(&ps, 0.1);
  CHECK(ps.value("w")(0, 0) == before0);
  CHECK(ps.value("w")(0, 1) == before1);
}

TEST_CASE("global norm clip rescales only when needed") {
  ParameterSet<double> ps;
  ps.add("a", 1, 1);
  ps.add("b", 1, 1);
  ps.grad("a")(0, 0) = 3.0;
  ps.grad("b")(0, 0) = 4.0;

  CHECK(clip_global_norm(&ps, 10.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(ps.grad("a")(0, 0) == 3.0);  // under the cap, untouched
  CHECK(ps.grad("b")(0, 0) == 4.0);

  CHECK(clip_global_norm(&ps, 0.5) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(ps.grad("a")(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(ps.grad("b")(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("ppo config validation names the offending field") {
  PPOConfig cfg;
  cfg.n_envs = 4;
  cfg.rollout_len = 5;
  cfg.total_steps = 100;
  cfg.minibatches = 2;
  CHECK_NOTHROW(cfg.validate());

  PPOConfig bad = cfg;
  bad.minibatches = 3;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("minibatches"),
                       std::invalid_argument);
  bad = cfg;
  bad.total_steps = 19;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("total_steps"),
                       std::invalid_argument);
  bad = cfg;
  bad.clip_eps = -0.1;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("clip_eps"),
                       std::invalid_argument);
  bad = cfg;
  bad.gamma = 1.5;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("gamma"),
                       std::invalid_argument);
  bad = cfg;
  bad.keep_checkpoints = 0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("keep_checkpoints"),
                       std::invalid_argument);
}

TEST_CASE("done gates cut gradient flow through the hidden chain") {
  PolicyConfig cfg = small_cfg();
  ParameterSet<double> ps;
  Rng init_rng(5);
  ensure_policy_params(&ps, cfg, &init_rng);

  Graph<double> g;
  int h0 = g.input(1, cfg.gru_width);
  StepRefs step0 = build_policy_step(&g, &ps, cfg, h0);
  int keep = g.input(1, cfg.gru_width);
  int h1 = g.mul(step0.hidden_next, keep);
  StepRefs step1 = build_policy_step(&g, &ps, cfg, h1);
  int loss = g.sum(g.square(step1.logits));

  Rng rng(6);
  auto rand_obs = [&](int n_vis) {
    Observation o;
    for (double& x : o.robot) x = rng.uniform(-2.0, 2.0);
    o.humans.assign(cfg.n_max, {0.0, 0.0, 0.0, 0.0});
    o.visibility.assign(cfg.n_max, 0);
    for (int i = 0; i < n_vis; ++i) {
      o.humans[i] = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                     rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      o.visibility[i] = 1;
    }
    o.n_visible = n_vis;
    o.scan.resize(cfg.scan_len);
    for (double& s : o.scan) s = rng.uniform(0.5, 6.0);
    return o;
  };
  fill_step_inputs(&g, step0, cfg, rand_obs(2));
  fill_step_inputs(&g, step1, cfg, rand_obs(3));
  Mat<double> h0_val(1, cfg.gru_width);
  for (double& x : h0_val.data) x = rng.uniform(-0.5, 0.5);
  g.set_value(h0, h0_val);

  Mat<double> gate(1, cfg.gru_width);
  g.set_value(keep, gate);  // zeros: the segment boundary
  g.forward();
  g.backward(loss);
  for (double x : g.grad(h0).data) CHECK(x == 0.0);

  gate.fill(1.0);
  g.set_value(keep, gate);
  g.forward();
  g.backward(loss);
  double h0_grad_mag = 0.0;
  for (double x : g.grad(h0).data) h0_grad_mag += std::abs(x);
  CHECK(h0_grad_mag > 0.0);
}

TEST_CASE("zero clip radius with zero aux coefficients leaves weights untouched") {
  // With identical old and new policies every importance ratio is exactly 1.
  // A zero clip radius then pins the surrogate to the clipped branch, whose
  // gradient vanishes, so with the value and entropy terms switched off an
  // entire update must be a bit-exact no-op. This exercises the whole chain:
  // actor log-probs matching the graph's log-softmax bitwise, the min/clamp
  // tie conventions, and the optimizer ignoring zero gradients.
  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 4;
  cfg.rollout_len = 6;
  cfg.total_steps = 24;
  cfg.minibatches = 2;
  cfg.epochs = 2;
  cfg.lr0 = 0.05;  // deliberately large: any leak would move the weights
  cfg.clip_eps = 0.0;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.seed = 17;

  Trainer t(pcfg, cfg, bandit_factory(pcfg), fresh_dir("noop"));
  std::vector<std::pair<std::string, std::vector<double>>> before;
  for (const std::string& name : t.policy().params().names())
    before.push_back({name, t.policy().params().value(name).data});

  UpdateStats stats = t.run_update();
  CHECK(stats.grad_norm == 0.0);
  CHECK(stats.clip_frac == 0.0);
  for (const auto& [name, data] : before) {
    const Mat<double>& now = t.policy().params().value(name);
    REQUIRE(static_cast<size_t>(now.size()) == data.size());
    for (size_t k = 0; k < data.size(); ++k) CHECK(now.data[k] == data[k]);
  }
}

TEST_CASE("ppo improves a two-armed bandit") {
  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 4;
  cfg.rollout_len = 8;
  cfg.minibatches = 2;
  cfg.epochs = 4;
  cfg.lr0 = 0.01;
  cfg.total_steps = static_cast<long long>(cfg.batch()) * 60;
  cfg.seed = 7;
  cfg.stats_window = 100;

  Trainer t(pcfg, cfg, bandit_factory(pcfg), fresh_dir("bandit"));
  t.run();

  BanditEnv probe(pcfg);
  Mat<double> h = t.policy().initial_hidden();
  Rng rng(1);
  ActResult res = t.policy().act(probe.observe(), &h, &rng, /*greedy=*/true);
  CHECK(res.action == BanditEnv::kGood);
  CHECK(res.probs[BanditEnv::kGood] > 0.9);
}

TEST_CASE("step accounting and checkpoint retention follow the config") {
  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.rollout_len = 3;
  cfg.minibatches = 1;
  cfg.epochs = 1;
  cfg.total_steps = 24;  // exactly four batches
  cfg.checkpoint_interval = 6;
  cfg.keep_checkpoints = 2;
  cfg.seed = 3;

  const std::string out = fresh_dir("retention");
  Trainer t(pcfg, cfg, bandit_factory(pcfg), out);
  t.run();

  CHECK(t.env_steps() == 24);
  CHECK(t.updates_done() == 4);
  REQUIRE(t.retained_checkpoints().size() == 2);
  CHECK(t.retained_checkpoints()[0] == out + "/ckpt_18");
  CHECK(t.retained_checkpoints()[1] == out + "/ckpt_24");
  for (const char* suffix : {".json", ".bin", ".state.json", ".opt.bin"}) {
    CHECK(fs::exists(out + "/ckpt_24" + std::string(suffix)));
    CHECK(fs::exists(out + "/ckpt_18" + std::string(suffix)));
    CHECK_FALSE(fs::exists(out + "/ckpt_12" + std::string(suffix)));
    CHECK_FALSE(fs::exists(out + "/ckpt_6" + std::string(suffix)));
  }
  CHECK(read_lines(out + "/metrics.jsonl").size() == 4);
}

TEST_CASE("same seed twice gives byte-identical metrics") {
  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 4;
  cfg.rollout_len = 5;
  cfg.minibatches = 2;
  cfg.epochs = 2;
  cfg.lr0 = 5e-3;
  cfg.total_steps = 200;
  cfg.seed = 11;

  const std::string out_a = fresh_dir("det_a"), out_b = fresh_dir("det_b");
  Trainer a(pcfg, cfg, bandit_factory(pcfg), out_a);
  Trainer b(pcfg, cfg, bandit_factory(pcfg), out_b);
  for (int i = 0; i < 3; ++i) {
    a.run_update();
    b.run_update();
  }
  const std::string ma = read_file(out_a + "/metrics.jsonl");
  CHECK(ma == read_file(out_b + "/metrics.jsonl"));
  CHECK(ma.find("\"update\":1") != std::string::npos);
}

TEST_CASE("resume from a checkpoint reproduces the original run exactly") {
  // Real environments this time, so restore also exercises the simulator's
  // state round-trip (rng streams, orca state, episode bookkeeping).
  EnvConfig env_cfg;
  env_cfg.n_humans_lo = 1;
  env_cfg.n_humans_hi = 2;
  env_cfg.n_obstacles_lo = 1;
  env_cfg.n_obstacles_hi = 2;
  env_cfg.arena_half_extent = 4.0;
  env_cfg.n_max = 4;
  env_cfg.beams = 18;
  env_cfg.max_steps = 7;  // frequent timeouts so resets land inside the run
  env_cfg.start_goal_lo = 2.5;
  env_cfg.start_goal_hi = 3.5;

  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.rollout_len = 5;
  cfg.minibatches = 1;
  cfg.epochs = 2;
  cfg.lr0 = 1e-3;
  cfg.total_steps = 40;
  cfg.checkpoint_interval = 10;  // one checkpoint per update
  cfg.seed = 21;

  EnvFactory factory = [&env_cfg](int, uint64_t seed) {
    return std::make_unique<CrowdEnv>(env_cfg, seed);
  };

  const std::string out_a = fresh_dir("resume_a"), out_b = fresh_dir("resume_b");
  Trainer a(pcfg, cfg, factory, out_a);
  for (int i = 0; i < 4; ++i) a.run_update();
  const auto lines_a = read_lines(out_a + "/metrics.jsonl");
  REQUIRE(lines_a.size() == 4);

  Trainer b(pcfg, cfg, factory, out_b);
  b.resume_from(out_a + "/ckpt_20");
  CHECK(b.env_steps() == 20);
  CHECK(b.updates_done() == 2);
  b.run_update();
  b.run_update();

  const auto lines_b = read_lines(out_b + "/metrics.jsonl");
  REQUIRE(lines_b.size() == 2);
  CHECK(lines_b[0] == lines_a[2]);
  CHECK(lines_b[1] == lines_a[3]);

  for (const char* suffix : {".bin", ".opt.bin", ".state.json"})
    CHECK(read_file(out_a + "/ckpt_40" + std::string(suffix)) ==
          read_file(out_b + "/ckpt_40" + std::string(suffix)));
}

TEST_CASE("resume refuses a checkpoint from a different variant") {
  PolicyConfig pcfg = small_cfg(Variant::RhHh);
  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.rollout_len = 3;
  cfg.minibatches = 1;
  cfg.total_steps = 12;
  cfg.seed = 9;

  const std::string out = fresh_dir("variant_guard");
  Trainer t(pcfg, cfg, bandit_factory(pcfg), out);
  t.save_checkpoint_files(out + "/ckpt_0");

  PolicyConfig other = small_cfg(Variant::NoAttn);
  Trainer u(other, cfg, bandit_factory(other), fresh_dir("variant_guard_b"));
  CHECK_THROWS_WITH_AS(u.resume_from(out + "/ckpt_0"),
                       doctest::Contains("variant"), std::runtime_error);
}

TEST_CASE("non-finite loss aborts with context") {
  PolicyConfig pcfg = small_cfg();
  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.rollout_len = 3;
  cfg.minibatches = 1;
  cfg.epochs = 1;
  cfg.total_steps = 12;
  cfg.seed = 13;

  Trainer t(pcfg, cfg, bandit_factory(pcfg), fresh_dir("nanguard"));
  t.policy().params().value("pi.b")(0, 0) = std::nan("");
  t.policy().params().bump_version();
  CHECK_THROWS_WITH_AS(t.run_update(), doctest::Contains("non-finite loss"),
                       std::runtime_error);
}
