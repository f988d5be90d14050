#include "eval/harness.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "nn/checkpoint.hpp"
#include "util/rng.hpp"

namespace crowdnav {

const std::vector<Regime>& builtin_regimes() {
  static const std::vector<Regime> kRegimes = {
      {"training-distribution", 5, 9, 8, 12},
      {"less-crowded", 0, 4, 8, 12},
      {"more-crowded", 10, 14, 8, 12},
      {"less-constrained", 5, 9, 3, 7},
      {"more-constrained", 5, 9, 13, 17},
  };
  return kRegimes;
}

const Regime& regime_by_name(const std::string& name) {
  for (const Regime& r : builtin_regimes())
    if (r.name == name) return r;
  std::string known;
  for (const Regime& r : builtin_regimes()) known += " " + r.name;
  throw std::invalid_argument("unknown regime '" + name + "'; known:" + known);
}

EnvConfig apply_regime(const EnvConfig& base, const Regime& regime) {
  EnvConfig cfg = base;
  cfg.n_humans_lo = regime.humans_lo;
  cfg.n_humans_hi = regime.humans_hi;
  cfg.n_obstacles_lo = regime.obstacles_lo;
  cfg.n_obstacles_hi = regime.obstacles_hi;
  return cfg;
}

uint64_t eval_episode_seed(uint64_t seed_base, const std::string& regime_name,
                           int episode) {
  uint64_t h = splitmix64(0xE7A15EED15F00D01ull ^ seed_base);
  for (char c : regime_name) h = splitmix64(h ^ static_cast<uint8_t>(c));
  return splitmix64(h ^ static_cast<uint64_t>(episode));
}

std::string classify_failure(TerminationReason reason, int steps_since_resample,
                             int humans_within_band) {
  switch (reason) {
    case TerminationReason::HumanCollision:
      if (steps_since_resample >= 0 && steps_since_resample <= 10)
        return "sudden_goal_switch";
      if (humans_within_band >= 3) return "crowd_blockage";
      return "human_collision";
    case TerminationReason::ObstacleCollision:
      return "obstacle_collision";
    case TerminationReason::Timeout:
      return "timeout";
    default:
      return "running";
  }
}

EpisodeRecord roll_episode(CrowdEnv* env, uint64_t episode_seed,
                           const ActionSource& source, EpisodeLog* log) {
  Observation obs = env->reset_seeded(episode_seed);
  if (log) *log = begin_episode_log(*env);

  EpisodeRecord rec;
  rec.seed = episode_seed;
  Vec2 prev = env->robot().position;
  std::map<int, int> last_resample;  // human index -> step of latest goal redraw

  const int limit = env->config().max_steps + 8;
  for (int k = 1; k <= limit; ++k) {
    ChosenAction chosen = source(obs);
    auto [next_obs, out] = env->step(chosen.action);

    rec.steps = k;
    rec.reward_sum += out.reward;
    const Vec2 p = env->robot().position;
    rec.path_length += std::hypot(p.x - prev.x, p.y - prev.y);
    prev = p;
    for (int h : out.resampled_goal_humans) last_resample[h] = k;

    if (log) {
      StepRecord sr = make_step_record(*env, chosen.action, out);
      sr.has_attention = chosen.has_attention;
      sr.rh_attn = chosen.rh_attn;
      sr.hh_attn = chosen.hh_attn;
      log->steps.push_back(std::move(sr));
    }

    if (out.terminal) {
      rec.reason = out.reason;
      rec.nav_time = k * env->config().dt;
      if (out.reason != TerminationReason::Goal) {
        int gap = -1;
        if (out.collided_human >= 0) {
          auto it = last_resample.find(out.collided_human);
          if (it != last_resample.end()) gap = k - it->second;
        }
        int close = 0;
        for (const HumanState& h : env->humans()) {
          const double d = std::hypot(h.position.x - p.x, h.position.y - p.y);
          if (d <= 1.5) ++close;
        }
        rec.failure = classify_failure(out.reason, gap, close);
      }
      if (log) log->final_reason = to_string(out.reason);
      return rec;
    }
    obs = next_obs;
  }
  throw std::runtime_error("episode did not terminate within max_steps");
}

MetricsTable summarize(const std::string& regime_name,
                       const std::vector<EpisodeRecord>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("summarize needs at least one episode");
  MetricsTable t;
  t.regime = regime_name;
  t.n_episodes = static_cast<int>(episodes.size());

  int succ = 0, human = 0, obst = 0, timeout = 0;
  double nav = 0.0, path = 0.0;
  for (const EpisodeRecord& e : episodes) {
    t.mean_reward += e.reward_sum;
    switch (e.reason) {
      case TerminationReason::Goal:
        ++succ;
        nav += e.nav_time;
        path += e.path_length;
        break;
      case TerminationReason::HumanCollision:
        ++human;
        break;
      case TerminationReason::ObstacleCollision:
        ++obst;
        break;
      case TerminationReason::Timeout:
        ++timeout;
        break;
      default:
        throw std::runtime_error("episode record without a terminal reason");
    }
    if (!e.failure.empty()) t.failure_counts[e.failure]++;
  }
  const double n = t.n_episodes;
  t.success_rate = succ / n;
  t.human_collision_rate = human / n;
  t.obstacle_collision_rate = obst / n;
  t.collision_rate = (human + obst) / n;
  t.timeout_rate = timeout / n;
  t.mean_reward /= n;
  if (succ > 0) {
    t.mean_nav_time = nav / succ;
    t.mean_path_length = path / succ;
  }
  t.check_identities();
  return t;
}

void MetricsTable::check_identities() const {
  if (n_episodes <= 0) throw std::runtime_error("metrics table with no episodes");
  const double slack = 1.0 / n_episodes + 1e-12;
  const double total = success_rate + collision_rate + timeout_rate;
  if (std::abs(total - 1.0) > slack)
    throw std::runtime_error("outcome rates do not partition: sum " + std::to_string(total));
  if (std::abs(human_collision_rate + obstacle_collision_rate - collision_rate) > 1e-12)
    throw std::runtime_error("collision split does not sum to the total");
  for (double r : {success_rate, collision_rate, human_collision_rate,
                   obstacle_collision_rate, timeout_rate})
    if (r < -1e-12 || r > 1.0 + 1e-12)
      throw std::runtime_error("rate outside [0, 1]: " + std::to_string(r));
}

nlohmann::json to_json(const MetricsTable& t) {
  nlohmann::json j;
  j["regime"] = t.regime;
  j["n_episodes"] = t.n_episodes;
  j["success_rate"] = t.success_rate;
  j["collision_rate"] = t.collision_rate;
  j["human_collision_rate"] = t.human_collision_rate;
  j["obstacle_collision_rate"] = t.obstacle_collision_rate;
  j["timeout_rate"] = t.timeout_rate;
  j["mean_nav_time"] = t.mean_nav_time;
  j["mean_path_length"] = t.mean_path_length;
  j["mean_reward"] = t.mean_reward;
  j["failure_counts"] = t.failure_counts;
  return j;
}

std::string render_tables(const std::vector<MetricsTable>& tables) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-22s %8s %8s %8s %8s %8s %9s %9s %9s\n",
                "regime", "success", "coll", "h-coll", "o-coll", "timeout",
                "nav-time", "path-len", "episodes");
  out += line;
  for (const MetricsTable& t : tables) {
    std::snprintf(line, sizeof(line),
                  "%-22s %8.3f %8.3f %8.3f %8.3f %8.3f %9.2f %9.2f %9d\n",
                  t.regime.c_str(), t.success_rate, t.collision_rate,
                  t.human_collision_rate, t.obstacle_collision_rate,
                  t.timeout_rate, t.mean_nav_time, t.mean_path_length,
                  t.n_episodes);
    out += line;
  }
  return out;
}

EvalRun run_eval(PolicyNetwork<double>* policy, const EnvConfig& base_env,
                 const Regime& regime, const EvalOptions& opt,
                 const EpisodeSink& sink) {
  if (opt.n_episodes <= 0) throw std::invalid_argument("n_episodes must be positive");
  CrowdEnv env(apply_regime(base_env, regime), opt.seed_base);

  EvalRun run;
  run.episodes.reserve(opt.n_episodes);
  Rng unused(0);  // greedy decoding draws nothing
  for (int i = 0; i < opt.n_episodes; ++i) {
    Mat<double> hidden = policy->initial_hidden();
    ActionSource source = [&](const Observation& obs) {
      ActResult r = policy->act(obs, &hidden, &unused, /*greedy=*/true);
      ChosenAction c;
      c.action = r.action;
      if (!r.attn_rh.empty() || !r.attn_hh.empty()) {
        c.has_attention = true;
        c.rh_attn = r.attn_rh;
        c.hh_attn = r.attn_hh;
      }
      return c;
    };
    EpisodeLog log;
    EpisodeLog* log_ptr = sink ? &log : nullptr;
    EpisodeRecord rec =
        roll_episode(&env, eval_episode_seed(opt.seed_base, regime.name, i), source, log_ptr);
    if (sink) sink(i, rec, log);
    run.episodes.push_back(std::move(rec));
  }
  run.table = summarize(regime.name, run.episodes);
  return run;
}

int select_checkpoint_index(const std::vector<double>& success_rates) {
  if (success_rates.empty())
    throw std::invalid_argument("checkpoint selection needs at least one candidate");
  int best = 0;
  for (int i = 1; i < static_cast<int>(success_rates.size()); ++i)
    if (success_rates[i] >= success_rates[best]) best = i;  // >= : latest tie wins
  return best;
}

CheckpointSelection select_checkpoint(const std::vector<std::string>& bases,
                                      const PolicyConfig& pcfg,
                                      const EnvConfig& base_env,
                                      const EvalOptions& opt,
                                      const Regime* regime) {
  CheckpointSelection sel;
  const Regime& chosen = regime ? *regime : builtin_regimes().front();
  for (const std::string& base : bases) {
    PolicyNetwork<double> net(pcfg, 0);
    load_checkpoint(base, &net.params());
    EvalRun run = run_eval(&net, base_env, chosen, opt);
    sel.success_rates.push_back(run.table.success_rate);
  }
  sel.index = select_checkpoint_index(sel.success_rates);
  return sel;
}

}  // namespace crowdnav
