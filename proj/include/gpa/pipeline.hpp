#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpa/config.hpp"
#include "gpa/kitti.hpp"
#include "gpa/optimizer.hpp"
#include "gpa/trajectory.hpp"

namespace gpa {

struct WindowRunResult {
  std::vector<int> frame_ids;
  WindowState state;
  std::vector<TraceRow> trace;
  bool degenerate = false;
  std::string note;
};

struct RunReport {
  Trajectory estimate;
  std::optional<double> ate_m;
  std::optional<RpeResult> rpe_result;
  int frames = 0;
  int windows = 0;
  int degenerate_windows = 0;
  ChainReport chain;
  std::vector<std::string> notes;
};

/// Number of parallel window workers: hardware concurrency capped by the
/// GPA_THREADS environment variable (>= 1).
int worker_count();

/// Full pipeline: sample windows, optimize each, chain, evaluate against
/// ground truth when present, and emit the report files (trajectory in KITTI
/// pose format, per-window loss traces, metrics CSV + table, SVG plot) into
/// cfg.output_dir.
RunReport run_pipeline(const SequenceSource& src, const RunConfig& cfg);

/// Loads (or renders) the frames of a source at the working resolution,
/// returning the matching intrinsics. Ground-truth depth maps are produced
/// for synthetic sources only.
struct LoadedSequence {
  Intrinsics k;
  std::vector<Image> images;
  std::vector<DepthMap> gt_depths;  // empty for KITTI
  std::optional<Trajectory> gt_poses;
  int first_frame = 0;
};
LoadedSequence load_frames(const SequenceSource& src, const RunConfig& cfg);

/// Top-down (x, z) polyline plot of the estimate and optional ground truth.
std::string trajectory_svg(const Trajectory& est, const Trajectory* gt);

}  // namespace gpa
