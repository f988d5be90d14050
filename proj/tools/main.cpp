// crowdnav command line: train policies, evaluate checkpoints across the
// built-in regimes, export replays, and cross-check the numeric core.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eval/harness.hpp"
#include "io/replay_export.hpp"
#include "io/run_config.hpp"
#include "nn/checkpoint.hpp"
#include "policy/policy.hpp"
#include "rl/ppo.hpp"
#include "sim/crowd_env.hpp"
#include "sim/episode_log.hpp"
#include "verify/checks.hpp"

namespace fs = std::filesystem;
using namespace crowdnav;

namespace {

// Global flags shared by every subcommand. The CLI::Option pointers let the
// commands distinguish "explicitly set" from "left at default" so a config
// file only loses to flags the user actually gave (or CROWDNAV_* env vars).
struct Globals {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = true;

  CLI::Option* opt_config = nullptr;
  CLI::Option* opt_out = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_threads = nullptr;
  CLI::Option* opt_det = nullptr;
};

// defaults -> config file (explicit or fallback) -> env vars / flags.
RunConfig make_run_config(const Globals& g, const std::string& fallback_config) {
  RunConfig rc;
  if (g.opt_config->count() > 0) {
    rc = load_run_config(g.config_path);
  } else if (!fallback_config.empty() && fs::exists(fallback_config)) {
    rc = load_run_config(fallback_config);
    std::cout << "using config " << fallback_config << "\n";
  }
  if (g.opt_seed->count() > 0) rc.seed = g.seed;
  if (g.opt_out->count() > 0) rc.out_dir = g.out_dir;
  if (g.opt_threads->count() > 0) rc.threads = g.threads;
  if (g.opt_det->count() > 0) rc.deterministic = g.deterministic;
  return rc;
}

void warn_threading(const RunConfig& rc) {
  if (rc.threads > 1)
    std::cerr << "note: " << rc.threads
              << " threads requested; running a single worker so results stay "
                 "reproducible\n";
  if (!rc.deterministic)
    std::cerr << "note: execution is always deterministic for a fixed seed; "
                 "--no-deterministic has no effect\n";
}

int cmd_train(const Globals& g, const std::string& resume, long long total_steps,
              const std::string& variant) {
  RunConfig rc = make_run_config(g, "");
  if (total_steps > 0) rc.ppo.total_steps = total_steps;
  if (!variant.empty()) rc.policy.variant = variant_from_string(variant);
  rc.ppo.seed = rc.seed;
  rc.validate();
  warn_threading(rc);

  fs::create_directories(rc.out_dir);
  write_config_snapshot(rc, rc.out_dir);

  EnvFactory factory = [env_cfg = rc.env](int, uint64_t env_seed) {
    return std::unique_ptr<EnvInterface>(new CrowdEnv(env_cfg, env_seed));
  };
  Trainer trainer(rc.policy, rc.ppo, factory, rc.out_dir);
  if (!resume.empty()) {
    trainer.resume_from(resume);
    std::cout << "resumed from " << resume << " at " << trainer.env_steps()
              << " env steps\n";
  }
  std::cout << "training variant " << to_string(rc.policy.variant) << " for "
            << rc.ppo.total_steps << " env steps (seed " << rc.seed << ") -> "
            << rc.out_dir << "\n";
  trainer.run();
  std::cout << "done: " << trainer.updates_done() << " updates, "
            << trainer.env_steps() << " env steps\n"
            << "metrics: " << rc.out_dir << "/metrics.jsonl\n";
  if (!trainer.retained_checkpoints().empty())
    std::cout << "latest checkpoint: " << trainer.retained_checkpoints().back() << "\n";
  return 0;
}

// ckpt_<steps> bases found directly in `dir`, sorted by steps ascending.
std::vector<std::string> find_checkpoint_bases(const fs::path& dir) {
  std::vector<std::pair<long long, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || name.size() < 10) continue;
    if (name.substr(name.size() - 5) != ".json") continue;
    if (name.size() > 11 && name.substr(name.size() - 11) == ".state.json") continue;
    try {
      long long steps = std::stoll(name.substr(5, name.size() - 10));
      found.emplace_back(steps, (dir / name.substr(0, name.size() - 5)).string());
    } catch (const std::exception&) {
      continue;  // not of the ckpt_<steps> form
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> bases;
  for (auto& [steps, base] : found) bases.push_back(std::move(base));
  return bases;
}

int cmd_eval(const Globals& g, const std::string& target, int episodes, int save_logs,
             const std::string& regime_flag) {
  // The target is either a run directory (pick the best of the last five
  // checkpoints) or a single checkpoint base path without extension.
  std::vector<std::string> candidates;
  fs::path run_dir;
  if (fs::is_directory(target)) {
    run_dir = target;
    candidates = find_checkpoint_bases(run_dir);
    if (candidates.empty())
      throw std::runtime_error("no checkpoints (ckpt_*.json) found in " + target);
    if (candidates.size() > 5)
      candidates.erase(candidates.begin(), candidates.end() - 5);
  } else if (fs::exists(target + ".json")) {
    candidates = {target};
    run_dir = fs::path(target).parent_path();
    if (run_dir.empty()) run_dir = ".";
  } else {
    throw std::runtime_error("'" + target +
                             "' is neither a run directory nor a checkpoint base");
  }

  RunConfig rc = make_run_config(g, (run_dir / "config.json").string());
  if (!regime_flag.empty()) rc.regime = regime_flag;
  if (episodes > 0) rc.eval.n_episodes = episodes;
  if (g.opt_seed->count() > 0) rc.eval.seed_base = g.seed;
  rc.out_dir = g.opt_out->count() > 0 ? g.out_dir : (run_dir / "eval").string();
  rc.validate();
  warn_threading(rc);

  std::vector<Regime> regimes;
  if (rc.regime == "all") {
    regimes = builtin_regimes();
  } else if (rc.regime == "as-configured") {
    // Evaluate on the training env's own ranges instead of a builtin regime,
    // which matters for runs whose n_max is below the builtin human counts.
    regimes.push_back(Regime{"as-configured", rc.env.n_humans_lo, rc.env.n_humans_hi,
                             rc.env.n_obstacles_lo, rc.env.n_obstacles_hi});
  } else {
    regimes.push_back(regime_by_name(rc.regime));
  }

  std::string base = candidates.back();
  if (candidates.size() > 1) {
    // Pick among the last checkpoints on the training distribution (or on the
    // as-configured band when that is what we are evaluating).
    const Regime* sel_regime = rc.regime == "as-configured" ? &regimes.front() : nullptr;
    CheckpointSelection sel =
        select_checkpoint(candidates, rc.policy, rc.env, rc.eval, sel_regime);
    base = candidates[static_cast<size_t>(sel.index)];
    std::cout << "checkpoint selection on "
              << (sel_regime ? sel_regime->name : "training-distribution") << " ("
              << rc.eval.n_episodes << " episodes each):\n";
    for (size_t i = 0; i < candidates.size(); ++i)
      std::cout << (static_cast<int>(i) == sel.index ? "  * " : "    ")
                << fs::path(candidates[i]).filename().string() << "  success "
                << sel.success_rates[i] << "\n";
  }

  PolicyNetwork<double> policy(rc.policy, rc.seed);
  CheckpointMeta meta = load_checkpoint(base, &policy.params());
  if (!meta.model_tag.empty() && meta.model_tag != to_string(rc.policy.variant))
    std::cerr << "warning: checkpoint tagged '" << meta.model_tag
              << "' but config says '" << to_string(rc.policy.variant) << "'\n";

  fs::create_directories(rc.out_dir);
  write_config_snapshot(rc, rc.out_dir);
  if (save_logs > 0) fs::create_directories(fs::path(rc.out_dir) / "episodes");

  std::vector<MetricsTable> tables;
  for (const Regime& regime : regimes) {
    EpisodeSink sink = nullptr;
    if (save_logs > 0) {
      sink = [&](int idx, const EpisodeRecord&, const EpisodeLog& log) {
        if (idx >= save_logs) return;
        fs::path p = fs::path(rc.out_dir) / "episodes" /
                     (regime.name + "-" + std::to_string(idx) + ".json");
        write_episode_log_file(p.string(), log);
      };
    }
    EvalRun run = run_eval(&policy, rc.env, regime, rc.eval, sink);
    tables.push_back(std::move(run.table));
  }

  std::cout << "evaluating " << fs::path(base).filename().string() << " ("
            << meta.train_steps << " train steps)\n"
            << render_tables(tables);

  nlohmann::json out;
  out["version"] = 1;
  out["checkpoint"] = base;
  out["episodes_per_regime"] = rc.eval.n_episodes;
  out["seed_base"] = rc.eval.seed_base;
  out["tables"] = nlohmann::json::array();
  for (const MetricsTable& t : tables) out["tables"].push_back(to_json(t));
  fs::path metrics_path = fs::path(rc.out_dir) / "eval_metrics.json";
  std::ofstream mf(metrics_path);
  mf << out.dump(2) << "\n";
  if (!mf) throw std::runtime_error("cannot write " + metrics_path.string());
  std::cout << "metrics: " << metrics_path.string() << "\n";
  if (save_logs > 0)
    std::cout << "episode logs: " << (fs::path(rc.out_dir) / "episodes").string() << "\n";
  return 0;
}

int cmd_replay(const Globals& g, const std::string& log_path, int stride,
               bool attention) {
  EpisodeLog log = read_episode_log_file(log_path);
  ReplayCheck check = check_replay(log);
  if (check.bit_exact) {
    std::cout << "replay check: bit-exact over " << log.steps.size() << " steps\n";
  } else {
    std::cout << "replay check: DIVERGED at step " << check.first_divergent_step
              << " (" << check.detail << ")\n";
  }

  std::string out = g.opt_out->count() > 0
                        ? g.out_dir
                        : log_path.substr(0, log_path.rfind('.')) + "_replay";
  ReplayExportOptions opt;
  opt.frame_stride = stride;
  opt.want_attention = attention;
  ReplayExportResult res = export_replay(log, out, opt);
  for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "positions: " << res.positions_path << "\n"
            << "frames: " << res.frame_paths.size() << " svg files in " << out
            << "/frames" << (res.attention_drawn ? " (attention edges drawn)" : "")
            << "\n"
            << "outcome: " << log.final_reason << " after "
            << log.steps.size() << " steps\n";
  return check.bit_exact ? 0 : 1;
}

int cmd_verify(const Globals& g, bool corrupt_mask) {
  VerifyOptions opt;
  if (g.opt_seed->count() > 0) opt.seed = g.seed;
  opt.corrupt_mask_sentinel = corrupt_mask;
  if (corrupt_mask)
    std::cout << "negative control: mask sentinel corrupted, the mask check "
                 "must fail\n";
  std::vector<CheckResult> results = run_verify_checks(opt);
  return print_verify_report(results, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdnav: crowd navigation in cluttered 2D arenas - training, "
               "evaluation, replay export and numeric self-checks"};
  app.require_subcommand(1);

  Globals g;
  g.opt_config = app.add_option("--config", g.config_path,
                                "JSON config merged over built-in defaults")
                     ->envname("CROWDNAV_CONFIG")
                     ->check(CLI::ExistingFile);
  g.opt_seed = app.add_option("--seed", g.seed, "master seed for the run")
                   ->envname("CROWDNAV_SEED");
  g.opt_out = app.add_option("--out", g.out_dir, "output directory")
                  ->envname("CROWDNAV_OUT");
  g.opt_threads = app.add_option("--threads", g.threads, "worker threads (only 1 is used)")
                      ->envname("CROWDNAV_THREADS");
  g.opt_det = app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
                           "deterministic execution (always on)")
                  ->envname("CROWDNAV_DETERMINISTIC");

  CLI::App* train = app.add_subcommand("train", "Train a policy with recurrent PPO");
  train->fallthrough();
  std::string resume, variant;
  long long total_steps = 0;
  train->add_option("--resume", resume, "checkpoint base to continue from");
  train->add_option("--total-steps", total_steps, "override the env-step budget");
  train->add_option("--variant", variant,
                    "network variant: rh_hh, rh_only, hh_only, no_attn, homo_gat");

  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint (or the best of a run's last five)");
  eval->fallthrough();
  std::string target, regime_flag;
  int episodes = 0, save_logs = 0;
  eval->add_option("target", target, "run directory or checkpoint base path")
      ->required();
  eval->add_option("--regime", regime_flag,
                   "regime name, 'all', or 'as-configured' (default from config)");
  eval->add_option("--episodes", episodes, "episodes per regime");
  eval->add_option("--save-logs", save_logs,
                   "write the first N episode logs per regime");

  CLI::App* replay = app.add_subcommand(
      "replay", "Check an episode log and export positions + svg frames");
  replay->fallthrough();
  std::string log_path;
  int stride = 0;
  bool attention = false;
  replay->add_option("log", log_path, "episode log json")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--stride", stride, "keep every Nth frame (default ~20 frames)");
  replay->add_flag("--attention", attention, "draw attention weights as edge opacity");

  CLI::App* verify = app.add_subcommand(
      "verify", "Cross-check geometry, rewards, ORCA, GAE, gradients and masking");
  verify->fallthrough();
  bool corrupt_mask = false;
  verify->add_flag("--corrupt-mask-sentinel", corrupt_mask,
                   "negative control: break the padding mask and expect a failure");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(g, resume, total_steps, variant);
    if (eval->parsed()) return cmd_eval(g, target, episodes, save_logs, regime_flag);
    if (replay->parsed()) return cmd_replay(g, log_path, stride, attention);
    if (verify->parsed()) return cmd_verify(g, corrupt_mask);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
