#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "policy/policy.hpp"
#include "sim/crowd_env.hpp"
#include "sim/episode_log.hpp"

namespace crowdnav {

// A test density band: how many humans and obstacles episodes draw.
struct Regime {
  std::string name;
  int humans_lo = 0, humans_hi = 0;
  int obstacles_lo = 0, obstacles_hi = 0;
};

// The five built-in bands. The first is the training distribution; the other
// four move one of the two ranges while keeping the training band for the
// other, to probe generalization in each direction separately.
const std::vector<Regime>& builtin_regimes();
const Regime& regime_by_name(const std::string& name);  // throws, lists names

// Copy of `base` with the regime's count ranges swapped in.
EnvConfig apply_regime(const EnvConfig& base, const Regime& regime);

// Episode seeds come from a tagged splitmix64 fold over (seed_base, regime
// name, ordinal). Training derives env seeds from xoshiro draws on the run
// seed, so the two streams cannot collide by construction.
uint64_t eval_episode_seed(uint64_t seed_base, const std::string& regime_name,
                           int episode);

struct EpisodeRecord {
  uint64_t seed = 0;
  TerminationReason reason = TerminationReason::Running;
  int steps = 0;
  double nav_time = 0.0;     // steps * dt
  double path_length = 0.0;  // integrated robot displacement
  double reward_sum = 0.0;
  std::string failure;  // bucket name, empty on success
};

struct MetricsTable {
  std::string regime;
  int n_episodes = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;  // human + obstacle
  double human_collision_rate = 0.0;
  double obstacle_collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_nav_time = 0.0;     // successes only, 0 when none
  double mean_path_length = 0.0;  // successes only, 0 when none
  double mean_reward = 0.0;       // all episodes
  std::map<std::string, int> failure_counts;

  // Internal consistency: rates in range, outcomes partition the episodes,
  // collision split sums to the total. Throws std::runtime_error.
  void check_identities() const;
};

nlohmann::json to_json(const MetricsTable& t);

// Fixed-width text table, one row per entry, shared header.
std::string render_tables(const std::vector<MetricsTable>& tables);

MetricsTable summarize(const std::string& regime_name,
                       const std::vector<EpisodeRecord>& episodes);

// Failure buckets. A human collision shortly after the colliding human's
// goal resample reads as a sudden goal switch; one in a tight cluster of
// humans reads as crowd blockage; anything else keeps its termination
// reason. Thresholds: 10 steps, 3 humans within 1.5 m (center distance).
std::string classify_failure(TerminationReason reason, int steps_since_resample,
                             int humans_within_band);

// What the per-step controller returns; attention present when exported.
struct ChosenAction {
  int action = 4;
  bool has_attention = false;
  std::vector<double> rh_attn;
  std::vector<std::vector<double>> hh_attn;
};
using ActionSource = std::function<ChosenAction(const Observation&)>;

// One seeded episode under `source`, classification included. When `log` is
// non-null it is filled for replay/export.
EpisodeRecord roll_episode(CrowdEnv* env, uint64_t episode_seed,
                           const ActionSource& source, EpisodeLog* log = nullptr);

struct EvalOptions {
  int n_episodes = 500;
  uint64_t seed_base = 1;
};

// Called after each episode when installed (e.g. to write logs to disk).
using EpisodeSink = std::function<void(int episode_index, const EpisodeRecord&,
                                       const EpisodeLog&)>;

struct EvalRun {
  MetricsTable table;
  std::vector<EpisodeRecord> episodes;
};

// Greedy rollouts of `policy` over freshly seeded episodes in the regime.
EvalRun run_eval(PolicyNetwork<double>* policy, const EnvConfig& base_env,
                 const Regime& regime, const EvalOptions& opt,
                 const EpisodeSink& sink = nullptr);

// Index of the best success rate; ties go to the latest entry.
int select_checkpoint_index(const std::vector<double>& success_rates);

struct CheckpointSelection {
  int index = -1;
  std::vector<double> success_rates;  // on the training regime
};

// Loads each checkpoint base, evaluates it on one regime (the training
// distribution unless told otherwise) with the same seeds, and picks the
// winner per select_checkpoint_index.
CheckpointSelection select_checkpoint(const std::vector<std::string>& bases,
                                      const PolicyConfig& pcfg,
                                      const EnvConfig& base_env,
                                      const EvalOptions& opt,
                                      const Regime* regime = nullptr);

}  // namespace crowdnav
