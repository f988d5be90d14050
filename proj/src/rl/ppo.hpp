#pragma once

#include <array>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nn/graph.hpp"
#include "policy/policy.hpp"
#include "rl/adam.hpp"
#include "sim/env_interface.hpp"

namespace crowdnav {

struct PPOConfig {
  int n_envs = 28;
  int rollout_len = 30;
  long long total_steps = 1'000'000;
  double lr0 = 5e-5;  // decays linearly to zero across total_steps
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs = 4;
  int minibatches = 4;  // splits the batch by whole environments
  double max_grad_norm = 0.5;
  uint64_t seed = 0;
  long long checkpoint_interval = 0;  // env steps; <= 0 means total_steps / 5
  int keep_checkpoints = 5;
  int stats_window = 100;  // completed episodes feeding the running stats

  long long batch() const { return static_cast<long long>(n_envs) * rollout_len; }
  void validate() const;
};

struct UpdateStats {
  long long update = 0;
  long long env_steps = 0;
  double lr = 0.0;
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double clip_frac = 0.0;
  int episodes_window = 0;
  double mean_ep_reward = 0.0;
  double mean_ep_len = 0.0;
  double success_rate = 0.0;
};

using EnvFactory =
    std::function<std::unique_ptr<EnvInterface>(int env_index, uint64_t env_seed)>;

// Recurrent PPO: synchronous rollouts across n_envs environments, GAE,
// clipped surrogate with BPTT through each rollout segment, Adam with global
// gradient clipping and a linearly decaying learning rate. Single-threaded
// and fully deterministic for a fixed seed.
class Trainer {
 public:
  Trainer(const PolicyConfig& policy_cfg, const PPOConfig& cfg, EnvFactory factory,
          std::string out_dir);
  ~Trainer();

  // Collect/update until total_steps env steps are consumed, checkpointing
  // on the configured cadence (and always at the end).
  void run();

  // One collect+update cycle; returns the stats that were also appended to
  // the metrics file. Exposed for tests and fine-grained drivers.
  UpdateStats run_update();

  void resume_from(const std::string& checkpoint_base);

  long long env_steps() const { return env_steps_; }
  long long updates_done() const { return update_count_; }
  PolicyNetwork<double>& policy() { return *policy_; }
  const std::vector<std::string>& retained_checkpoints() const { return retained_; }
  const std::string& out_dir() const { return out_dir_; }

  // Writes <base>.json/.bin (weights) plus .state.json/.opt.bin (everything
  // needed to continue the run exactly where it left off).
  void save_checkpoint_files(const std::string& base) const;

 private:
  struct TrainSlot {
    StepRefs refs;
    int onehot = -1, logp_old = -1, adv = -1, ret = -1;
    int ratio = -1;
  };

  void collect();
  UpdateStats optimize();
  void fill_minibatch(int mb, const Mat<double>& adv, const Mat<double>& ret);
  void maybe_checkpoint();
  void checkpoint_now();
  void append_metrics(const UpdateStats& s);
  UpdateStats window_stats() const;

  PolicyConfig pcfg_;
  PPOConfig cfg_;
  std::string out_dir_;
  int group_size_ = 0;

  std::unique_ptr<PolicyNetwork<double>> policy_;
  Adam<double> adam_;
  Rng sampler_;

  std::vector<std::unique_ptr<EnvInterface>> envs_;
  std::vector<Observation> obs_;
  std::vector<Mat<double>> hidden_;
  std::vector<Mat<double>> initial_hidden_;
  std::vector<double> ep_reward_acc_;
  std::vector<int> ep_len_acc_;
  std::deque<std::array<double, 3>> window_;  // reward, length, success

  // Rollout storage, index [e * rollout_len + t].
  std::vector<Observation> buf_obs_;
  std::vector<int> buf_action_;
  std::vector<double> buf_logp_, buf_value_, buf_reward_, buf_done_;
  std::vector<double> bootstrap_;

  // One static training graph spanning group_size envs x rollout_len steps.
  Graph<double> tg_;
  std::vector<int> tg_hidden0_;
  std::vector<std::vector<TrainSlot>> tg_slot_;
  std::vector<std::vector<int>> tg_keep_;
  int tg_loss_ = -1, tg_surr_ = -1, tg_vloss_ = -1, tg_ent_ = -1;

  long long env_steps_ = 0;
  long long update_count_ = 0;
  long long last_ckpt_step_ = -1;
  std::vector<std::string> retained_;
};

}  // namespace crowdnav
