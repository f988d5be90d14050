#include "sim/episode_log.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sim/json_types.hpp"

namespace crowdnav {
namespace {

using nlohmann::json;

json step_to_json(const StepRecord& s) {
  json j = {{"type", "step"},     {"action", s.action}, {"reward", s.reward},
            {"r_main", s.r_main}, {"r_spin", s.r_spin}, {"r_time", s.r_time},
            {"d_min", s.d_min},   {"d_goal", s.d_goal}, {"robot", s.robot},
            {"humans", s.humans}, {"resampled", s.resampled}, {"reason", s.reason}};
  if (s.has_attention) {
    j["rh_attn"] = s.rh_attn;
    j["hh_attn"] = s.hh_attn;
  }
  return j;
}

StepRecord step_from_json(const json& j) {
  StepRecord s;
  j.at("action").get_to(s.action);
  j.at("reward").get_to(s.reward);
  j.at("r_main").get_to(s.r_main);
  j.at("r_spin").get_to(s.r_spin);
  j.at("r_time").get_to(s.r_time);
  j.at("d_min").get_to(s.d_min);
  j.at("d_goal").get_to(s.d_goal);
  j.at("robot").get_to(s.robot);
  j.at("humans").get_to(s.humans);
  j.at("resampled").get_to(s.resampled);
  j.at("reason").get_to(s.reason);
  if (j.contains("rh_attn")) {
    s.has_attention = true;
    j.at("rh_attn").get_to(s.rh_attn);
    j.at("hh_attn").get_to(s.hh_attn);
  }
  return s;
}

[[noreturn]] void bad_line(int line_no, const std::string& why) {
  throw std::runtime_error("episode log line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

EpisodeLog begin_episode_log(const CrowdEnv& env) {
  EpisodeLog log;
  log.episode_seed = env.episode_seed();
  log.config = env.config();
  log.scene = env.scene();
  log.robot0 = env.robot();
  log.humans0 = env.humans();
  return log;
}

StepRecord make_step_record(const CrowdEnv& env, int action, const StepOutcome& out) {
  StepRecord s;
  s.action = action;
  s.reward = out.reward;
  s.r_main = out.r_main;
  s.r_spin = out.r_spin;
  s.r_time = out.r_time;
  s.d_min = out.d_min;
  s.d_goal = out.d_goal;
  s.robot = env.robot();
  s.humans = env.humans();
  s.resampled = out.resampled_goal_humans;
  s.reason = to_string(out.reason);
  return s;
}

void write_episode_log(std::ostream& out, const EpisodeLog& log) {
  json header = {{"type", "header"},        {"version", log.version},
                 {"episode_seed", log.episode_seed}, {"config", log.config},
                 {"scene", log.scene},      {"robot", log.robot0},
                 {"humans", log.humans0}};
  out << header.dump() << '\n';
  for (const StepRecord& s : log.steps) out << step_to_json(s).dump() << '\n';
  json footer = {{"type", "end"},
                 {"reason", log.final_reason},
                 {"steps", log.steps.size()}};
  out << footer.dump() << '\n';
}

void write_episode_log_file(const std::string& path, const EpisodeLog& log) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_episode_log(f, log);
  if (!f) throw std::runtime_error("write failed: " + path);
}

EpisodeLog read_episode_log(std::istream& in) {
  EpisodeLog log;
  std::string line;
  int line_no = 0;
  bool saw_header = false, saw_end = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (saw_end) bad_line(line_no, "content after end record");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      bad_line(line_no, std::string("not valid JSON (") + e.what() + ")");
    }
    std::string type;
    try {
      type = j.at("type").get<std::string>();
      if (type == "header") {
        if (saw_header) bad_line(line_no, "duplicate header");
        int version = j.at("version").get<int>();
        if (version != EpisodeLog::kVersion)
          bad_line(line_no, "unsupported version " + std::to_string(version));
        log.version = version;
        j.at("episode_seed").get_to(log.episode_seed);
        j.at("config").get_to(log.config);
        j.at("scene").get_to(log.scene);
        j.at("robot").get_to(log.robot0);
        j.at("humans").get_to(log.humans0);
        saw_header = true;
      } else if (type == "step") {
        if (!saw_header) bad_line(line_no, "step before header");
        log.steps.push_back(step_from_json(j));
      } else if (type == "end") {
        if (!saw_header) bad_line(line_no, "end before header");
        j.at("reason").get_to(log.final_reason);
        size_t n = j.at("steps").get<size_t>();
        if (n != log.steps.size())
          bad_line(line_no, "step count mismatch: footer says " + std::to_string(n) +
                                ", read " + std::to_string(log.steps.size()));
        saw_end = true;
      } else {
        bad_line(line_no, "unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      bad_line(line_no, std::string("missing or mistyped field (") + e.what() + ")");
    }
  }
  if (!saw_header) throw std::runtime_error("episode log: missing header record");
  if (!saw_end) throw std::runtime_error("episode log: missing end record (truncated?)");
  return log;
}

EpisodeLog read_episode_log_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return read_episode_log(f);
}

CrowdEnv make_replay_env(const EpisodeLog& log) {
  CrowdEnv env(log.config, /*stream_seed=*/0);
  env.reset_seeded(log.episode_seed);
  return env;
}

namespace {

bool same_robot(const RobotState& a, const RobotState& b) {
  return a.position.x == b.position.x && a.position.y == b.position.y &&
         a.heading == b.heading && a.v == b.v && a.omega == b.omega &&
         a.goal.x == b.goal.x && a.goal.y == b.goal.y && a.radius == b.radius;
}

bool same_humans(const std::vector<HumanState>& a, const std::vector<HumanState>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].position.x != b[i].position.x || a[i].position.y != b[i].position.y ||
        a[i].velocity.x != b[i].velocity.x || a[i].velocity.y != b[i].velocity.y ||
        a[i].goal.x != b[i].goal.x || a[i].goal.y != b[i].goal.y)
      return false;
  }
  return true;
}

}  // namespace

ReplayCheck check_replay(const EpisodeLog& log) {
  ReplayCheck r;
  CrowdEnv env = make_replay_env(log);
  if (!same_robot(env.robot(), log.robot0) || !same_humans(env.humans(), log.humans0)) {
    r.bit_exact = false;
    r.first_divergent_step = 0;
    r.detail = "initial state does not match the header reconstruction";
    return r;
  }
  for (size_t k = 0; k < log.steps.size(); ++k) {
    const StepRecord& rec = log.steps[k];
    auto [obs, out] = env.step(rec.action);
    (void)obs;
    if (out.reward != rec.reward || !same_robot(env.robot(), rec.robot) ||
        !same_humans(env.humans(), rec.humans) || to_string(out.reason) != rec.reason) {
      r.bit_exact = false;
      r.first_divergent_step = static_cast<int>(k) + 1;
      r.detail = "state diverged at step " + std::to_string(k + 1);
      return r;
    }
  }
  return r;
}

}  // namespace crowdnav
