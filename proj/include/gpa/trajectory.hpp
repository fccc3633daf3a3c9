#pragma once

#include <string>
#include <vector>

#include "gpa/geometry.hpp"

namespace gpa {

struct TrajectoryEntry {
  int frame_id = 0;
  Pose pose;  // world-from-camera
};

/// Ordered camera trajectory; frame ids strictly increasing.
struct Trajectory {
  std::vector<TrajectoryEntry> poses;

  void push(int frame_id, const Pose& pose);
  const Pose* find(int frame_id) const;
  size_t size() const { return poses.size(); }
};

/// Similarity (or rigid, scale == 1) alignment: p -> scale * R * p + t.
struct AlignTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply_point(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }
  /// Acts on a camera pose: rotation composes, the center is mapped.
  Pose apply_pose(const Pose& p) const {
    return {rotation * p.rotation, apply_point(p.translation)};
  }
};

/// Least-squares rigid/similarity alignment of point sets (SVD-based with
/// reflection correction). Throws DegeneracyError for fewer than three pairs
/// or a collinear configuration that leaves the rotation ambiguous.
AlignTransform umeyama_align(const std::vector<Vec3>& src_points,
                             const std::vector<Vec3>& dst_points,
                             bool with_scale);

enum class ChainMode { Rigid, Similarity };

/// Per-window relative poses: poses[i] maps camera i into the frame of the
/// window's first camera.
struct WindowPoses {
  std::vector<int> frame_ids;
  std::vector<Pose> poses;
};

struct ChainReport {
  int umeyama_windows = 0;
  int composition_windows = 0;
  int degenerate_fallbacks = 0;
  std::vector<std::string> notes;
};

/// Chains overlapping windows into one trajectory in the gauge of window 0.
/// Windows overlapping by >= 3 frames align via Umeyama over shared camera
/// centers; smaller overlaps compose through the latest shared frame (with
/// pair-distance scale recovery in similarity mode). Degenerate Umeyama
/// geometry throws unless allow_fallback, which falls back to composition
/// and records the event.
Trajectory chain_windows(const std::vector<WindowPoses>& windows,
                         ChainMode mode, bool allow_fallback = false,
                         ChainReport* report = nullptr);

enum class AlignMode { Rigid, Similarity };

/// RMSE of camera-center residuals after one global alignment. Degenerate
/// estimates (fewer than three or collinear common centers) fall back to the
/// canonical closed form without the ambiguity check; the minimal residual
/// value is still well-defined there.
double ate(const Trajectory& est, const Trajectory& gt, AlignMode align_mode);

struct RpeResult {
  double translation_m = 0;
  double rotation_deg = 0;
};

/// RMSE of frame-to-frame relative-motion discrepancies at the given delta;
/// no global alignment.
RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta);

/// KITTI pose format: per line 12 values, row-major 3x4 [R|t], written with
/// 9 significant digits. Frame ids are line numbers.
Trajectory read_kitti_poses(const std::string& path);
std::string format_kitti_poses(const Trajectory& traj);
void write_kitti_poses(const std::string& path, const Trajectory& traj);

/// Parses one 12-value pose line (shared with the KITTI calib/pose readers).
Pose parse_pose_line(const std::string& line, const std::string& context);

}  // namespace gpa
