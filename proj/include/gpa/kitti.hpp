#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpa/geometry.hpp"
#include "gpa/synthworld.hpp"
#include "gpa/trajectory.hpp"

namespace gpa {

/// A frame sequence the pipeline can consume: either a KITTI odometry
/// sequence on disk or a synthetic scene description.
struct SequenceSource {
  enum class Kind { Kitti, Synthetic };
  Kind kind = Kind::Kitti;

  std::vector<std::string> image_paths;  // Kitti
  SyntheticSequenceSpec synth;           // Synthetic

  Intrinsics calib;
  std::optional<Trajectory> gt_poses;
  std::string name;

  int frame_count() const {
    return kind == Kind::Kitti ? static_cast<int>(image_paths.size())
                               : static_cast<int>(synth.poses.size());
  }
};

/// Parses a KITTI odometry projection-matrix file ("P0: <12 values>" lines).
std::map<std::string, std::vector<double>> parse_kitti_calib(const std::string& path);

/// Loads root/sequences/<seq_id>: calib.txt plus image_0/ (preferred) or
/// image_2/, and ground-truth poses from root/poses/<seq_id>.txt when
/// present. Intrinsics come from the projection matrix of the image folder
/// in use; image dimensions from the first frame.
SequenceSource load_kitti_sequence(const std::string& root, const std::string& seq_id);

SequenceSource make_synthetic_source(const std::string& scene_path);

}  // namespace gpa
