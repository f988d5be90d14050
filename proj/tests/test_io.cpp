#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "io/replay_export.hpp"
#include "io/run_config.hpp"
#include "sim/crowd_env.hpp"
#include "sim/episode_log.hpp"

using namespace crowdnav;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("crowdnav_io_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

EnvConfig tiny_env() {
  EnvConfig cfg;
  cfg.n_humans_lo = 1;
  cfg.n_humans_hi = 2;
  cfg.n_obstacles_lo = 1;
  cfg.n_obstacles_hi = 2;
  cfg.arena_half_extent = 4.0;
  cfg.n_max = 4;
  cfg.beams = 18;
  cfg.max_steps = 30;
  cfg.start_goal_lo = 2.5;
  cfg.start_goal_hi = 3.5;
  return cfg;
}

// A short real episode under scripted actions, so the export paths see the
// same shapes the eval harness produces.
EpisodeLog scripted_log(int n_steps, bool with_attention) {
  CrowdEnv env(tiny_env(), 11);
  env.reset_seeded(211);
  EpisodeLog log = begin_episode_log(env);
  for (int k = 0; k < n_steps; ++k) {
    const int a = k % 2 == 0 ? 5 : 4;
    auto [obs, out] = env.step(a);
    StepRecord rec = make_step_record(env, a, out);
    if (with_attention) {
      rec.has_attention = true;
      rec.rh_attn.assign(4, 0.0);
      rec.rh_attn[0] = 0.7;
      rec.rh_attn[1] = 0.3;
      rec.hh_attn.assign(4, std::vector<double>(4, 0.25));
    }
    log.steps.push_back(rec);
    if (out.terminal) break;
  }
  log.final_reason = log.steps.back().reason;
  return log;
}

}  // namespace

TEST_CASE("default config round-trips through its own json dump") {
  RunConfig a;
  nlohmann::json dump = to_json(a);

  RunConfig b;
  merge_run_config(dump, &b);
  CHECK(to_json(b).dump(2) == dump.dump(2));
  CHECK(dump.at("version").get<int>() == RunConfig::kVersion);
}

TEST_CASE("partial configs touch only the keys they carry") {
  RunConfig cfg;
  const double lr_before = cfg.ppo.lr0;
  merge_run_config(nlohmann::json{{"ppo", {{"epochs", 7}}},
                                  {"env", {{"n_humans", {2, 3}}}}},
                   &cfg);
  CHECK(cfg.ppo.epochs == 7);
  CHECK(cfg.ppo.lr0 == lr_before);
  CHECK(cfg.env.n_humans_lo == 2);
  CHECK(cfg.env.n_humans_hi == 3);
  CHECK(cfg.env.n_obstacles_lo == EnvConfig{}.n_obstacles_lo);
}

TEST_CASE("config errors name the offending key") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(merge_run_config(nlohmann::json{{"env", {{"bogus", 1}}}}, &cfg),
                       doctest::Contains("env.bogus"), std::exception);
  CHECK_THROWS_WITH_AS(merge_run_config(nlohmann::json{{"wat", 1}}, &cfg),
                       doctest::Contains("wat"), std::exception);
  CHECK_THROWS_WITH_AS(
      merge_run_config(nlohmann::json{{"ppo", {{"lr0", "fast"}}}}, &cfg),
      doctest::Contains("ppo.lr0"), std::exception);
  CHECK_THROWS_WITH_AS(
      merge_run_config(nlohmann::json{{"env", {{"n_humans", {1}}}}}, &cfg),
      doctest::Contains("[lo, hi]"), std::exception);
  CHECK_THROWS_WITH_AS(merge_run_config(nlohmann::json{{"version", 2}}, &cfg),
                       doctest::Contains("unsupported config version 2"),
                       std::exception);
}

TEST_CASE("loading a missing config names the file") {
  CHECK_THROWS_WITH_AS(load_run_config("/nonexistent/cfg.json"),
                       doctest::Contains("/nonexistent/cfg.json"), std::exception);
}

TEST_CASE("validation catches cross-module mismatches") {
  RunConfig cfg;
  cfg.env = tiny_env();
  cfg.policy.n_max = cfg.env.n_max;
  cfg.policy.scan_len = cfg.env.beams;
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("slot count") {
    cfg.policy.n_max = 7;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("policy.n_max"),
                         std::exception);
  }
  SUBCASE("scan length") {
    cfg.policy.scan_len = 90;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("policy.scan_len"),
                         std::exception);
  }
  SUBCASE("regime names") {
    cfg.regime = "weird";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("weird"), std::exception);
    cfg.regime = "all";
    CHECK_NOTHROW(cfg.validate());
    cfg.regime = "as-configured";
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("a snapshot reloads to the identical configuration") {
  fs::path dir = fresh_dir("snap");
  RunConfig cfg;
  cfg.env = tiny_env();
  cfg.policy.n_max = 4;
  cfg.policy.scan_len = 18;
  cfg.ppo.total_steps = 4321;
  cfg.seed = 17;
  cfg.regime = "less-crowded";
  cfg.out_dir = (dir / "run").string();

  std::string path = write_config_snapshot(cfg, dir.string());
  CHECK(fs::path(path).filename() == "config.json");
  RunConfig back = load_run_config(path);
  CHECK(to_json(back).dump(2) == to_json(cfg).dump(2));
  fs::remove_all(dir);
}

TEST_CASE("positions csv has a version stamp and one row per agent per step") {
  EpisodeLog log = scripted_log(6, false);
  std::ostringstream out;
  write_positions_csv(out, log);

  std::vector<std::string> lines;
  std::istringstream in(out.str());
  for (std::string line; std::getline(in, line);) lines.push_back(line);

  REQUIRE(lines.size() >= 3);
  CHECK(lines[0] == "# crowdnav positions v1");
  CHECK(lines[1] == "step,agent,x,y,heading,goal_x,goal_y");
  const size_t agents = 1 + log.humans0.size();
  CHECK(lines.size() == 2 + log.steps.size() * agents);
  CHECK(lines[2].rfind("0,robot,", 0) == 0);
  CHECK(lines[3].rfind("0,h0,", 0) == 0);
}

TEST_CASE("frames are well-formed svg with the scene drawn") {
  EpisodeLog log = scripted_log(5, false);
  std::string svg = render_frame_svg(log, 2, false);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
  CHECK(svg.find("crowdnav frame v1: step 2 of 5") != std::string::npos);

  size_t polygons = 0;
  for (size_t at = svg.find("<polygon"); at != std::string::npos;
       at = svg.find("<polygon", at + 1))
    ++polygons;
  CHECK(polygons >= log.scene.obstacles.size());
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK_THROWS_AS((void)render_frame_svg(log, 99, false), std::exception);
}

TEST_CASE("export honors the stride and always keeps the final frame") {
  EpisodeLog log = scripted_log(8, false);
  fs::path dir = fresh_dir("stride");
  ReplayExportOptions opt;
  opt.frame_stride = 3;
  ReplayExportResult res = export_replay(log, dir.string(), opt);

  CHECK(fs::exists(res.positions_path));
  // Steps 0, 3, 6 plus the forced terminal step 7.
  REQUIRE(res.frame_paths.size() == 4);
  for (const std::string& p : res.frame_paths) CHECK(fs::exists(p));
  CHECK(fs::path(res.frame_paths.back()).filename().string().find("0007") !=
        std::string::npos);
  CHECK(res.warnings.empty());
  CHECK_FALSE(res.attention_drawn);
  fs::remove_all(dir);
}

TEST_CASE("attention weights show up as edges when asked for") {
  fs::path dir = fresh_dir("attn");
  ReplayExportOptions opt;
  opt.want_attention = true;

  SUBCASE("a log that carries weights draws them") {
    EpisodeLog log = scripted_log(5, true);
    ReplayExportResult res = export_replay(log, dir.string(), opt);
    CHECK(res.attention_drawn);
    CHECK(res.warnings.empty());
    std::ifstream f(res.frame_paths.front());
    std::stringstream buf;
    buf << f.rdbuf();
    CHECK(buf.str().find("attention edges drawn") != std::string::npos);
  }
  SUBCASE("a log without weights degrades with a warning") {
    EpisodeLog log = scripted_log(5, false);
    ReplayExportResult res = export_replay(log, dir.string(), opt);
    CHECK_FALSE(res.attention_drawn);
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0] ==
          "episode log carries no attention weights; frames drawn without them");
  }
  fs::remove_all(dir);
}

TEST_CASE("exporting an empty log is refused") {
  EpisodeLog log;
  CHECK_THROWS_AS((void)export_replay(log, fresh_dir("empty").string(), {}),
                  std::invalid_argument);
}
