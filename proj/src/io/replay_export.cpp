#include "io/replay_export.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crowdnav {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// World coordinates are y-up, the document format is y-down.
std::string pt(Vec2 p) { return fmt(p.x) + "," + fmt(-p.y); }

void circle(std::ostringstream& s, Vec2 c, double r, const char* fill,
            double opacity = 1.0) {
  s << "  <circle cx=\"" << fmt(c.x) << "\" cy=\"" << fmt(-c.y) << "\" r=\"" << fmt(r)
    << "\" fill=\"" << fill << "\" fill-opacity=\"" << fmt(opacity) << "\"/>\n";
}

void line(std::ostringstream& s, Vec2 a, Vec2 b, const char* stroke, double width,
          double opacity) {
  s << "  <line x1=\"" << fmt(a.x) << "\" y1=\"" << fmt(-a.y) << "\" x2=\"" << fmt(b.x)
    << "\" y2=\"" << fmt(-b.y) << "\" stroke=\"" << stroke << "\" stroke-width=\""
    << fmt(width) << "\" stroke-opacity=\"" << fmt(opacity) << "\"/>\n";
}

}  // namespace

void write_positions_csv(std::ostream& out, const EpisodeLog& log) {
  out << "# crowdnav positions v1\n";
  out << "step,agent,x,y,heading,goal_x,goal_y\n";
  for (size_t k = 0; k < log.steps.size(); ++k) {
    const StepRecord& sr = log.steps[k];
    const RobotState& r = sr.robot;
    out << k << ",robot," << r.position.x << "," << r.position.y << "," << r.heading
        << "," << r.goal.x << "," << r.goal.y << "\n";
    for (size_t h = 0; h < sr.humans.size(); ++h) {
      const HumanState& hs = sr.humans[h];
      const double heading =
          (hs.velocity.x == 0.0 && hs.velocity.y == 0.0)
              ? 0.0
              : std::atan2(hs.velocity.y, hs.velocity.x);
      out << k << ",h" << h << "," << hs.position.x << "," << hs.position.y << ","
          << heading << "," << hs.goal.x << "," << hs.goal.y << "\n";
    }
  }
}

std::string render_frame_svg(const EpisodeLog& log, int step_index,
                             bool draw_attention) {
  if (step_index < 0 || step_index >= static_cast<int>(log.steps.size()))
    throw std::out_of_range("frame step index out of range");
  const StepRecord& sr = log.steps[step_index];
  const double H = log.scene.arena_half_extent;
  const double margin = 0.5;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
    << "viewBox=\"" << fmt(-H - margin) << " " << fmt(-H - margin) << " "
    << fmt(2 * (H + margin)) << " " << fmt(2 * (H + margin)) << "\">\n";
  s << "  <!-- crowdnav frame v1: step " << step_index << " of " << log.steps.size()
    << ", reason " << sr.reason << " -->\n";
  s << "  <rect x=\"" << fmt(-H) << "\" y=\"" << fmt(-H) << "\" width=\"" << fmt(2 * H)
    << "\" height=\"" << fmt(2 * H)
    << "\" fill=\"white\" stroke=\"black\" stroke-width=\"0.05\"/>\n";

  for (const OrientedRect& o : log.scene.obstacles) {
    const auto c = o.corners();
    s << "  <polygon points=\"" << pt(c[0]) << " " << pt(c[1]) << " " << pt(c[2]) << " "
      << pt(c[3]) << "\" fill=\"dimgray\" fill-opacity=\"0.8\"/>\n";
  }

  // Attention edges first so agents draw on top of them.
  bool drew_attention = false;
  if (draw_attention && sr.has_attention) {
    for (size_t i = 0; i < sr.humans.size() && i < sr.rh_attn.size(); ++i) {
      const double w = std::min(1.0, std::max(0.0, sr.rh_attn[i]));
      if (w < 0.01) continue;
      line(s, sr.robot.position, sr.humans[i].position, "crimson", 0.06, w);
      drew_attention = true;
    }
    for (size_t i = 0; i < sr.hh_attn.size() && i < sr.humans.size(); ++i)
      for (size_t j = 0; j < sr.hh_attn[i].size() && j < sr.humans.size(); ++j) {
        if (i == j) continue;
        const double w = std::min(1.0, std::max(0.0, sr.hh_attn[i][j]));
        if (w < 0.15) continue;
        line(s, sr.humans[i].position, sr.humans[j].position, "gray", 0.03, w);
        drew_attention = true;
      }
  }
  if (drew_attention)
    s << "  <!-- attention edges drawn -->\n";

  const Vec2 g = sr.robot.goal;
  line(s, {g.x - 0.2, g.y - 0.2}, {g.x + 0.2, g.y + 0.2}, "green", 0.06, 1.0);
  line(s, {g.x - 0.2, g.y + 0.2}, {g.x + 0.2, g.y - 0.2}, "green", 0.06, 1.0);

  for (const HumanState& h : sr.humans) circle(s, h.position, h.radius, "steelblue");

  const RobotState& r = sr.robot;
  circle(s, r.position, r.radius, "black");
  const Vec2 tip{r.position.x + 1.8 * r.radius * std::cos(r.heading),
                 r.position.y + 1.8 * r.radius * std::sin(r.heading)};
  line(s, r.position, tip, "orange", 0.08, 1.0);

  s << "</svg>\n";
  return s.str();
}

ReplayExportResult export_replay(const EpisodeLog& log, const std::string& out_dir,
                                 const ReplayExportOptions& opt) {
  if (log.steps.empty()) throw std::invalid_argument("episode log has no steps");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/frames");

  ReplayExportResult res;
  res.positions_path = out_dir + "/positions.csv";
  std::ofstream csv(res.positions_path);
  if (!csv) throw std::runtime_error("cannot write " + res.positions_path);
  write_positions_csv(csv, log);

  bool logged_attention = false;
  for (const StepRecord& sr : log.steps)
    if (sr.has_attention) {
      logged_attention = true;
      break;
    }
  if (opt.want_attention && !logged_attention)
    res.warnings.push_back(
        "episode log carries no attention weights; frames drawn without them");

  const int n = static_cast<int>(log.steps.size());
  const int stride = opt.frame_stride > 0 ? opt.frame_stride : std::max(1, (n + 19) / 20);
  for (int k = 0; k < n; k += stride) {
    const std::string svg = render_frame_svg(log, k, opt.want_attention);
    if (svg.find("attention edges drawn") != std::string::npos)
      res.attention_drawn = true;
    char name[64];
    std::snprintf(name, sizeof(name), "/frames/frame_%04d.svg", k);
    const std::string path = out_dir + name;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << svg;
    res.frame_paths.push_back(path);
  }
  if ((n - 1) % stride != 0) {  // always include the terminal state
    const std::string svg = render_frame_svg(log, n - 1, opt.want_attention);
    if (svg.find("attention edges drawn") != std::string::npos)
      res.attention_drawn = true;
    char name[64];
    std::snprintf(name, sizeof(name), "/frames/frame_%04d.svg", n - 1);
    const std::string path = out_dir + name;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << svg;
    res.frame_paths.push_back(path);
  }
  return res;
}

}  // namespace crowdnav
