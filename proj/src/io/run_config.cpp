#include "io/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>

#include "sim/json_types.hpp"

namespace crowdnav {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("unknown config key '" + section + "." + it.key() + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T* dst, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(*dst);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key '" + section + "." + key +
                                "' has the wrong type: " + e.what());
  }
}

template <typename T>
void take_pair(const json& j, const char* key, T* lo, T* hi, const std::string& section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2)
    throw std::invalid_argument("config key '" + section + "." + key +
                                "' must be a [lo, hi] pair");
  v.at(0).get_to(*lo);
  v.at(1).get_to(*hi);
}

void merge_env(const json& j, EnvConfig* c) {
  reject_unknown(j, "env",
                 {"n_humans", "n_obstacles", "arena_half_extent", "n_max", "beams",
                  "max_range", "sensor_range", "robot_radius", "human_radius", "dt",
                  "max_steps", "start_goal", "accel_per_step", "v_max", "omega_max",
                  "pref_speed", "nonreactive_fraction", "static_humans_max",
                  "scan_noise_std", "orca"});
  take_pair(j, "n_humans", &c->n_humans_lo, &c->n_humans_hi, "env");
  take_pair(j, "n_obstacles", &c->n_obstacles_lo, &c->n_obstacles_hi, "env");
  take(j, "arena_half_extent", &c->arena_half_extent, "env");
  take(j, "n_max", &c->n_max, "env");
  take(j, "beams", &c->beams, "env");
  take(j, "max_range", &c->max_range, "env");
  take(j, "sensor_range", &c->sensor_range, "env");
  take(j, "robot_radius", &c->robot_radius, "env");
  take(j, "human_radius", &c->human_radius, "env");
  take(j, "dt", &c->dt, "env");
  take(j, "max_steps", &c->max_steps, "env");
  take_pair(j, "start_goal", &c->start_goal_lo, &c->start_goal_hi, "env");
  take(j, "accel_per_step", &c->accel_per_step, "env");
  take(j, "v_max", &c->v_max, "env");
  take(j, "omega_max", &c->omega_max, "env");
  take_pair(j, "pref_speed", &c->pref_speed_lo, &c->pref_speed_hi, "env");
  take(j, "nonreactive_fraction", &c->nonreactive_fraction, "env");
  take(j, "static_humans_max", &c->static_humans_max, "env");
  take(j, "scan_noise_std", &c->scan_noise_std, "env");
  if (j.contains("orca")) {
    const json& o = j.at("orca");
    reject_unknown(o, "env.orca",
                   {"neighbor_dist", "time_horizon", "time_horizon_obst", "dt"});
    take(o, "neighbor_dist", &c->orca.neighbor_dist, "env.orca");
    take(o, "time_horizon", &c->orca.time_horizon, "env.orca");
    take(o, "time_horizon_obst", &c->orca.time_horizon_obst, "env.orca");
    take(o, "dt", &c->orca.dt, "env.orca");
  }
}

void merge_policy(const json& j, PolicyConfig* c) {
  reject_unknown(j, "policy",
                 {"variant", "n_max", "scan_len", "attn_dim", "embed_dim",
                  "gru_width", "cnn_ch1", "cnn_ch2", "cnn_kernel", "cnn_stride",
                  "scan_normalizer"});
  if (j.contains("variant")) {
    std::string name;
    j.at("variant").get_to(name);
    c->variant = variant_from_string(name);  // throws naming the value
  }
  take(j, "n_max", &c->n_max, "policy");
  take(j, "scan_len", &c->scan_len, "policy");
  take(j, "attn_dim", &c->attn_dim, "policy");
  take(j, "embed_dim", &c->embed_dim, "policy");
  take(j, "gru_width", &c->gru_width, "policy");
  take(j, "cnn_ch1", &c->cnn_ch1, "policy");
  take(j, "cnn_ch2", &c->cnn_ch2, "policy");
  take(j, "cnn_kernel", &c->cnn_kernel, "policy");
  take(j, "cnn_stride", &c->cnn_stride, "policy");
  take(j, "scan_normalizer", &c->scan_normalizer, "policy");
}

void merge_ppo(const json& j, PPOConfig* c) {
  reject_unknown(j, "ppo",
                 {"n_envs", "rollout_len", "total_steps", "lr0", "gamma",
                  "gae_lambda", "clip_eps", "value_coef", "entropy_coef", "epochs",
                  "minibatches", "max_grad_norm", "checkpoint_interval",
                  "keep_checkpoints", "stats_window"});
  take(j, "n_envs", &c->n_envs, "ppo");
  take(j, "rollout_len", &c->rollout_len, "ppo");
  take(j, "total_steps", &c->total_steps, "ppo");
  take(j, "lr0", &c->lr0, "ppo");
  take(j, "gamma", &c->gamma, "ppo");
  take(j, "gae_lambda", &c->gae_lambda, "ppo");
  take(j, "clip_eps", &c->clip_eps, "ppo");
  take(j, "value_coef", &c->value_coef, "ppo");
  take(j, "entropy_coef", &c->entropy_coef, "ppo");
  take(j, "epochs", &c->epochs, "ppo");
  take(j, "minibatches", &c->minibatches, "ppo");
  take(j, "max_grad_norm", &c->max_grad_norm, "ppo");
  take(j, "checkpoint_interval", &c->checkpoint_interval, "ppo");
  take(j, "keep_checkpoints", &c->keep_checkpoints, "ppo");
  take(j, "stats_window", &c->stats_window, "ppo");
}

void merge_eval(const json& j, EvalOptions* c) {
  reject_unknown(j, "eval", {"n_episodes", "seed_base"});
  take(j, "n_episodes", &c->n_episodes, "eval");
  take(j, "seed_base", &c->seed_base, "eval");
}

}  // namespace

void merge_run_config(const json& j, RunConfig* cfg) {
  if (!j.is_object()) throw std::invalid_argument("config root must be an object");
  reject_unknown(j, "config",
                 {"version", "env", "policy", "ppo", "eval", "regime", "out",
                  "seed", "threads", "deterministic"});
  if (j.contains("version")) {
    int v = j.at("version").get<int>();
    if (v != RunConfig::kVersion)
      throw std::invalid_argument("unsupported config version " + std::to_string(v));
  }
  if (j.contains("env")) merge_env(j.at("env"), &cfg->env);
  if (j.contains("policy")) merge_policy(j.at("policy"), &cfg->policy);
  if (j.contains("ppo")) merge_ppo(j.at("ppo"), &cfg->ppo);
  if (j.contains("eval")) merge_eval(j.at("eval"), &cfg->eval);
  take(j, "regime", &cfg->regime, "config");
  take(j, "out", &cfg->out_dir, "config");
  take(j, "seed", &cfg->seed, "config");
  take(j, "threads", &cfg->threads, "config");
  take(j, "deterministic", &cfg->deterministic, "config");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  try {
    merge_run_config(j, &cfg);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("config file '" + path + "': " + e.what());
  }
  return cfg;
}

void RunConfig::validate() const {
  env.validate();
  ppo.validate();
  if (policy.n_max != env.n_max)
    throw std::invalid_argument("policy.n_max (" + std::to_string(policy.n_max) +
                                ") must match env.n_max (" + std::to_string(env.n_max) + ")");
  if (policy.scan_len != env.beams)
    throw std::invalid_argument("policy.scan_len (" + std::to_string(policy.scan_len) +
                                ") must match env.beams (" + std::to_string(env.beams) + ")");
  if (eval.n_episodes <= 0)
    throw std::invalid_argument("eval.n_episodes must be positive");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  if (regime != "all" && regime != "as-configured")
    regime_by_name(regime);  // throws on unknown names
}

nlohmann::json to_json(const RunConfig& cfg) {
  json j;
  j["version"] = RunConfig::kVersion;
  j["env"] = cfg.env;  // full adapter from json_types
  j["policy"] = {{"variant", to_string(cfg.policy.variant)},
                 {"n_max", cfg.policy.n_max},
                 {"scan_len", cfg.policy.scan_len},
                 {"attn_dim", cfg.policy.attn_dim},
                 {"embed_dim", cfg.policy.embed_dim},
                 {"gru_width", cfg.policy.gru_width},
                 {"cnn_ch1", cfg.policy.cnn_ch1},
                 {"cnn_ch2", cfg.policy.cnn_ch2},
                 {"cnn_kernel", cfg.policy.cnn_kernel},
                 {"cnn_stride", cfg.policy.cnn_stride},
                 {"scan_normalizer", cfg.policy.scan_normalizer}};
  j["ppo"] = {{"n_envs", cfg.ppo.n_envs},
              {"rollout_len", cfg.ppo.rollout_len},
              {"total_steps", cfg.ppo.total_steps},
              {"lr0", cfg.ppo.lr0},
              {"gamma", cfg.ppo.gamma},
              {"gae_lambda", cfg.ppo.gae_lambda},
              {"clip_eps", cfg.ppo.clip_eps},
              {"value_coef", cfg.ppo.value_coef},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"epochs", cfg.ppo.epochs},
              {"minibatches", cfg.ppo.minibatches},
              {"max_grad_norm", cfg.ppo.max_grad_norm},
              {"checkpoint_interval", cfg.ppo.checkpoint_interval},
              {"keep_checkpoints", cfg.ppo.keep_checkpoints},
              {"stats_window", cfg.ppo.stats_window}};
  j["eval"] = {{"n_episodes", cfg.eval.n_episodes}, {"seed_base", cfg.eval.seed_base}};
  j["regime"] = cfg.regime;
  j["out"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["deterministic"] = cfg.deterministic;
  return j;
}

std::string write_config_snapshot(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/config.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(cfg).dump(2) << "\n";
  return path;
}

}  // namespace crowdnav
