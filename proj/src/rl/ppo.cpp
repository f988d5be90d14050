#include "rl/ppo.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "nn/checkpoint.hpp"
#include "rl/gae.hpp"

namespace crowdnav {

namespace fs = std::filesystem;
using nlohmann::json;

void PPOConfig::validate() const {
  if (n_envs <= 0 || rollout_len <= 0) throw std::invalid_argument("empty rollout shape");
  if (minibatches <= 0 || n_envs % minibatches != 0)
    throw std::invalid_argument("minibatches must evenly divide n_envs");
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (total_steps < batch())
    throw std::invalid_argument("total_steps smaller than one rollout batch");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw std::invalid_argument("gamma and gae_lambda must sit in [0, 1]");
  if (clip_eps < 0.0) throw std::invalid_argument("clip_eps must be non-negative");
  if (keep_checkpoints <= 0) throw std::invalid_argument("keep_checkpoints must be positive");
}

Trainer::Trainer(const PolicyConfig& policy_cfg, const PPOConfig& cfg, EnvFactory factory,
                 std::string out_dir)
    : pcfg_(policy_cfg), cfg_(cfg), out_dir_(std::move(out_dir)), sampler_(0) {
  cfg_.validate();
  group_size_ = cfg_.n_envs / cfg_.minibatches;

  // All randomness flows from one seed in a fixed order: policy weights,
  // the action sampler, then one stream seed per environment.
  Rng seeder(cfg_.seed);
  const uint64_t policy_seed = seeder.next_u64();
  sampler_ = Rng(seeder.next_u64());
  policy_ = std::make_unique<PolicyNetwork<double>>(pcfg_, policy_seed);
  adam_.init(policy_->params());

  envs_.reserve(cfg_.n_envs);
  for (int e = 0; e < cfg_.n_envs; ++e) {
    envs_.push_back(factory(e, seeder.next_u64()));
    obs_.push_back(envs_.back()->reset());
    hidden_.push_back(policy_->initial_hidden());
    initial_hidden_.push_back(policy_->initial_hidden());
  }
  ep_reward_acc_.assign(cfg_.n_envs, 0.0);
  ep_len_acc_.assign(cfg_.n_envs, 0);

  const size_t cap = static_cast<size_t>(cfg_.n_envs) * cfg_.rollout_len;
  buf_obs_.resize(cap);
  buf_action_.assign(cap, 0);
  buf_logp_.assign(cap, 0.0);
  buf_value_.assign(cap, 0.0);
  buf_reward_.assign(cap, 0.0);
  buf_done_.assign(cap, 0.0);
  bootstrap_.assign(cfg_.n_envs, 0.0);

  // Static BPTT graph: group_size whole-environment sequences, refilled for
  // every (epoch, minibatch) pair. Building it once keeps update cost flat
  // and update order deterministic.
  ParameterSet<double>* ps = &policy_->params();
  const int t_len = cfg_.rollout_len;
  int surr_sum = -1, vloss_sum = -1, ent_sum = -1;
  tg_slot_.resize(group_size_);
  tg_keep_.resize(group_size_);
  for (int ge = 0; ge < group_size_; ++ge) {
    int h = tg_.input(1, pcfg_.gru_width);
    tg_hidden0_.push_back(h);
    for (int t = 0; t < t_len; ++t) {
      TrainSlot s;
      s.refs = build_policy_step(&tg_, ps, pcfg_, h);
      s.onehot = tg_.input(1, pcfg_.n_actions);
      s.logp_old = tg_.input(1, 1);
      s.adv = tg_.input(1, 1);
      s.ret = tg_.input(1, 1);

      auto lsm = tg_.log_softmax_rows(s.refs.logits);
      auto logp_new = tg_.sum(tg_.mul(s.onehot, lsm));
      s.ratio = tg_.exp_op(tg_.sub(logp_new, s.logp_old));
      auto clipped = tg_.clamp(s.ratio, 1.0 - cfg_.clip_eps, 1.0 + cfg_.clip_eps);
      auto surr =
          tg_.min_elem(tg_.mul(s.ratio, s.adv), tg_.mul(clipped, s.adv));
      auto vterm = tg_.square(tg_.sub(s.refs.value, s.ret));
      auto probs = tg_.softmax_rows_guarded(s.refs.logits);
      auto ent = tg_.scale(tg_.sum(tg_.mul(probs, lsm)), -1.0);

      surr_sum = surr_sum < 0 ? surr : tg_.add(surr_sum, surr);
      vloss_sum = vloss_sum < 0 ? vterm : tg_.add(vloss_sum, vterm);
      ent_sum = ent_sum < 0 ? ent : tg_.add(ent_sum, ent);

      tg_slot_[ge].push_back(s);
      if (t + 1 < t_len) {
        int keep = tg_.input(1, pcfg_.gru_width);
        tg_keep_[ge].push_back(keep);
        h = tg_.mul(s.refs.hidden_next, keep);
      }
    }
  }
  const double inv = 1.0 / (static_cast<double>(group_size_) * t_len);
  tg_surr_ = tg_.scale(surr_sum, inv);
  tg_vloss_ = tg_.scale(vloss_sum, inv);
  tg_ent_ = tg_.scale(ent_sum, inv);
  tg_loss_ = tg_.add(tg_.scale(tg_surr_, -1.0),
                     tg_.add(tg_.scale(tg_vloss_, cfg_.value_coef),
                             tg_.scale(tg_ent_, -cfg_.entropy_coef)));

  fs::create_directories(out_dir_);
}

Trainer::~Trainer() = default;

void Trainer::collect() {
  const int t_len = cfg_.rollout_len;
  for (int e = 0; e < cfg_.n_envs; ++e) initial_hidden_[e] = hidden_[e];

  for (int t = 0; t < t_len; ++t) {
    for (int e = 0; e < cfg_.n_envs; ++e) {
      const size_t k = static_cast<size_t>(e) * t_len + t;
      buf_obs_[k] = obs_[e];
      ActResult act = policy_->act(obs_[e], &hidden_[e], &sampler_);
      buf_action_[k] = act.action;
      buf_logp_[k] = act.log_prob;
      buf_value_[k] = act.value;

      std::pair<Observation, StepOutcome> stepped;
      try {
        stepped = envs_[e]->step(act.action);
      } catch (const std::exception& ex) {
        throw std::runtime_error("env " + std::to_string(e) + " failed at update " +
                                 std::to_string(update_count_ + 1) + " step " +
                                 std::to_string(t) + ": " + ex.what());
      }
      const StepOutcome& out = stepped.second;
      buf_reward_[k] = out.reward;
      buf_done_[k] = out.terminal ? 1.0 : 0.0;

      ep_reward_acc_[e] += out.reward;
      ep_len_acc_[e] += 1;
      if (out.terminal) {
        window_.push_back({ep_reward_acc_[e], double(ep_len_acc_[e]),
                           out.reason == TerminationReason::Goal ? 1.0 : 0.0});
        while (static_cast<int>(window_.size()) > cfg_.stats_window) window_.pop_front();
        ep_reward_acc_[e] = 0.0;
        ep_len_acc_[e] = 0;
        obs_[e] = envs_[e]->reset();
        hidden_[e] = policy_->initial_hidden();
      } else {
        obs_[e] = stepped.first;
      }
    }
  }
  env_steps_ += cfg_.batch();

  // Bootstrap values for the step after the rollout; greedy act leaves the
  // sampler untouched and the scratch hidden is discarded.
  for (int e = 0; e < cfg_.n_envs; ++e) {
    Mat<double> scratch = hidden_[e];
    bootstrap_[e] = policy_->act(obs_[e], &scratch, &sampler_, /*greedy=*/true).value;
  }
}

void Trainer::fill_minibatch(int mb, const Mat<double>& adv, const Mat<double>& ret) {
  const int t_len = cfg_.rollout_len;
  for (int ge = 0; ge < group_size_; ++ge) {
    const int e = mb * group_size_ + ge;
    tg_.set_value(tg_hidden0_[ge], initial_hidden_[e]);
    for (int t = 0; t < t_len; ++t) {
      const size_t k = static_cast<size_t>(e) * t_len + t;
      const TrainSlot& s = tg_slot_[ge][t];
      fill_step_inputs(&tg_, s.refs, pcfg_, buf_obs_[k]);

      Mat<double> onehot(1, pcfg_.n_actions);
      onehot(0, buf_action_[k]) = 1.0;
      tg_.set_value(s.onehot, onehot);
      tg_.set_value(s.logp_old, Mat<double>(1, 1, {buf_logp_[k]}));
      tg_.set_value(s.adv, Mat<double>(1, 1, {adv(e, t)}));
      tg_.set_value(s.ret, Mat<double>(1, 1, {ret(e, t)}));

      if (t + 1 < t_len) {
        Mat<double> keep(1, pcfg_.gru_width);
        if (buf_done_[k] == 0.0) keep.fill(1.0);
        tg_.set_value(tg_keep_[ge][t], keep);
      }
    }
  }
}

UpdateStats Trainer::optimize() {
  const int t_len = cfg_.rollout_len;
  Mat<double> rewards(cfg_.n_envs, t_len), dones(cfg_.n_envs, t_len),
      values(cfg_.n_envs, t_len + 1);
  for (int e = 0; e < cfg_.n_envs; ++e) {
    for (int t = 0; t < t_len; ++t) {
      const size_t k = static_cast<size_t>(e) * t_len + t;
      rewards(e, t) = buf_reward_[k];
      dones(e, t) = buf_done_[k];
      values(e, t) = buf_value_[k];
    }
    values(e, t_len) = bootstrap_[e];
  }
  GaeOut gae = compute_gae(rewards, dones, values, cfg_.gamma, cfg_.gae_lambda);
  normalize_advantages(&gae.advantages);

  // The decayed rate for this update reflects the steps consumed *before*
  // the batch it optimizes, so the first update runs at exactly lr0.
  const double lr = linear_lr(cfg_.lr0, env_steps_ - cfg_.batch(), cfg_.total_steps);

  UpdateStats stats = window_stats();
  stats.update = update_count_ + 1;
  stats.env_steps = env_steps_;
  stats.lr = lr;

  const int rounds = cfg_.epochs * cfg_.minibatches;
  long long clip_hits = 0, clip_total = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (int mb = 0; mb < cfg_.minibatches; ++mb) {
      fill_minibatch(mb, gae.advantages, gae.returns);
      policy_->params().zero_grads();
      tg_.forward();

      const double loss = tg_.value(tg_loss_)(0, 0);
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "non-finite loss at update " + std::to_string(update_count_ + 1) +
            " epoch " + std::to_string(epoch) + " minibatch " + std::to_string(mb));

      tg_.backward(tg_loss_);
      stats.grad_norm +=
          clip_global_norm(&policy_->params(), cfg_.max_grad_norm) / rounds;
      adam_.step(&policy_->params(), lr);

      stats.loss += loss / rounds;
      stats.policy_loss += -tg_.value(tg_surr_)(0, 0) / rounds;
      stats.value_loss += tg_.value(tg_vloss_)(0, 0) / rounds;
      stats.entropy += tg_.value(tg_ent_)(0, 0) / rounds;
      for (const auto& per_env : tg_slot_)
        for (const TrainSlot& s : per_env) {
          clip_total++;
          if (std::abs(tg_.value(s.ratio)(0, 0) - 1.0) > cfg_.clip_eps) clip_hits++;
        }
    }
  }
  stats.clip_frac = clip_total > 0 ? double(clip_hits) / double(clip_total) : 0.0;
  ++update_count_;
  return stats;
}

UpdateStats Trainer::window_stats() const {
  UpdateStats s;
  s.episodes_window = static_cast<int>(window_.size());
  if (window_.empty()) return s;
  for (const auto& w : window_) {
    s.mean_ep_reward += w[0];
    s.mean_ep_len += w[1];
    s.success_rate += w[2];
  }
  s.mean_ep_reward /= window_.size();
  s.mean_ep_len /= window_.size();
  s.success_rate /= window_.size();
  return s;
}

UpdateStats Trainer::run_update() {
  collect();
  UpdateStats stats = optimize();
  append_metrics(stats);
  maybe_checkpoint();
  return stats;
}

void Trainer::run() {
  while (env_steps_ + cfg_.batch() <= cfg_.total_steps) run_update();
  if (last_ckpt_step_ != env_steps_) checkpoint_now();
}

void Trainer::checkpoint_now() {
  const std::string base = out_dir_ + "/ckpt_" + std::to_string(env_steps_);
  save_checkpoint_files(base);
  last_ckpt_step_ = env_steps_;
  retained_.push_back(base);
  while (static_cast<int>(retained_.size()) > cfg_.keep_checkpoints) {
    for (const char* suffix : {".json", ".bin", ".state.json", ".opt.bin"})
      fs::remove(retained_.front() + suffix);
    retained_.erase(retained_.begin());
  }
}

void Trainer::append_metrics(const UpdateStats& s) {
  json j;
  j["update"] = s.update;
  j["env_steps"] = s.env_steps;
  j["lr"] = s.lr;
  j["loss"] = s.loss;
  j["policy_loss"] = s.policy_loss;
  j["value_loss"] = s.value_loss;
  j["entropy"] = s.entropy;
  j["grad_norm"] = s.grad_norm;
  j["clip_frac"] = s.clip_frac;
  j["episodes_window"] = s.episodes_window;
  j["mean_ep_reward"] = s.mean_ep_reward;
  j["mean_ep_len"] = s.mean_ep_len;
  j["success_rate"] = s.success_rate;
  std::ofstream out(out_dir_ + "/metrics.jsonl", std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + out_dir_ + "/metrics.jsonl");
  out << j.dump() << "\n";
}

void Trainer::maybe_checkpoint() {
  long long interval = cfg_.checkpoint_interval > 0
                           ? cfg_.checkpoint_interval
                           : std::max(cfg_.batch(), cfg_.total_steps / 5);
  if (env_steps_ / interval != (env_steps_ - cfg_.batch()) / interval) checkpoint_now();
}

void Trainer::save_checkpoint_files(const std::string& base) const {
  CheckpointMeta meta;
  meta.model_tag = to_string(pcfg_.variant);
  meta.train_steps = env_steps_;
  save_checkpoint(base, policy_->params(), meta);

  json state;
  state["version"] = 1;
  state["update"] = update_count_;
  state["env_steps"] = env_steps_;
  state["adam_t"] = adam_.t;
  state["sampler_rng"] = sampler_.state_string();
  json env_states = json::array();
  for (const auto& env : envs_) env_states.push_back(env->serialize_state());
  state["env_states"] = env_states;
  json hiddens = json::array();
  for (const auto& h : hidden_) hiddens.push_back(h.data);
  state["hiddens"] = hiddens;
  state["ep_reward_acc"] = ep_reward_acc_;
  state["ep_len_acc"] = ep_len_acc_;
  json window = json::array();
  for (const auto& w : window_) window.push_back({w[0], w[1], w[2]});
  state["window"] = window;
  std::ofstream sf(base + ".state.json");
  if (!sf) throw std::runtime_error("cannot write " + base + ".state.json");
  sf << state.dump(2) << "\n";

  std::ofstream of(base + ".opt.bin", std::ios::binary);
  if (!of) throw std::runtime_error("cannot write " + base + ".opt.bin");
  for (const std::string& name : policy_->params().names())
    detail::write_le(of, adam_.m.at(name).data);
  for (const std::string& name : policy_->params().names())
    detail::write_le(of, adam_.v.at(name).data);
}

void Trainer::resume_from(const std::string& base) {
  {
    std::ifstream mf(base + ".json");
    if (!mf) throw std::runtime_error("cannot open " + base + ".json");
    json manifest = json::parse(mf);
    const std::string tag = manifest.at("model_tag").get<std::string>();
    if (tag != to_string(pcfg_.variant))
      throw std::runtime_error("checkpoint was trained with variant '" + tag +
                               "', trainer is configured for '" +
                               to_string(pcfg_.variant) + "'");
  }
  load_checkpoint(base, &policy_->params());

  std::ifstream sf(base + ".state.json");
  if (!sf) throw std::runtime_error("cannot open " + base + ".state.json");
  json state = json::parse(sf);
  if (state.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported trainer state version");
  update_count_ = state.at("update").get<long long>();
  env_steps_ = state.at("env_steps").get<long long>();
  sampler_.set_state_string(state.at("sampler_rng").get<std::string>());

  const auto& env_states = state.at("env_states");
  if (env_states.size() != envs_.size())
    throw std::runtime_error("trainer state env count mismatch");
  for (size_t e = 0; e < envs_.size(); ++e) {
    envs_[e]->restore_state(env_states[e].get<std::string>());
    obs_[e] = envs_[e]->observe();
  }
  const auto& hiddens = state.at("hiddens");
  for (size_t e = 0; e < envs_.size(); ++e) {
    const auto vals = hiddens.at(e).get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != pcfg_.gru_width)
      throw std::runtime_error("trainer state hidden width mismatch");
    for (int j = 0; j < pcfg_.gru_width; ++j) hidden_[e](0, j) = vals[j];
  }
  ep_reward_acc_ = state.at("ep_reward_acc").get<std::vector<double>>();
  ep_len_acc_ = state.at("ep_len_acc").get<std::vector<int>>();
  window_.clear();
  for (const auto& w : state.at("window"))
    window_.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()});

  adam_.init(policy_->params());
  adam_.t = state.at("adam_t").get<long long>();
  std::ifstream of(base + ".opt.bin", std::ios::binary);
  if (!of) throw std::runtime_error("cannot open " + base + ".opt.bin");
  for (const std::string& name : policy_->params().names())
    detail::read_le(of, &adam_.m.at(name).data);
  for (const std::string& name : policy_->params().names())
    detail::read_le(of, &adam_.v.at(name).data);
  last_ckpt_step_ = env_steps_;
}

}  // namespace crowdnav
