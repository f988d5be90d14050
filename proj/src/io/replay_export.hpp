#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sim/episode_log.hpp"

namespace crowdnav {

struct ReplayExportOptions {
  int frame_stride = 0;         // 0: auto, about 20 frames plus the last step
  bool want_attention = false;  // draw logged attention as edge opacity
};

struct ReplayExportResult {
  std::string positions_path;
  std::vector<std::string> frame_paths;
  bool attention_drawn = false;
  std::vector<std::string> warnings;
};

// Per-step agent poses, one row per agent per step. The header row is
// preceded by a version stamp comment.
void write_positions_csv(std::ostream& out, const EpisodeLog& log);

// One standalone vector-graphics frame: arena, obstacles, humans, robot with
// heading arrow, goal marker, and (optionally) robot-to-human attention edges
// with opacity proportional to the logged weight.
std::string render_frame_svg(const EpisodeLog& log, int step_index,
                             bool draw_attention);

// Writes positions.csv and frames/frame_NNNN.svg under out_dir.
ReplayExportResult export_replay(const EpisodeLog& log, const std::string& out_dir,
                                 const ReplayExportOptions& opt);

}  // namespace crowdnav
