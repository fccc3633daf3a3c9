#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpa/loss.hpp"
#include "gpa/optimizer.hpp"
#include "gpa/trajectory.hpp"
#include "gpa/window.hpp"

namespace gpa {

/// Ordered key/value pairs from a flat "section.key = value" file.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_config_text(const std::string& text, const std::string& context);
KeyValues parse_config_file(const std::string& path);

enum class InitStrategy { ConstantDepth, GroundTruthPerturbed, FileProvided };

struct RunConfig {
  WindowConfig window;
  bool sample_window_anchors = false;  // default: every frame is an anchor
  LossConfig loss;
  OptimConfig optim;
  ChainMode chain_mode = ChainMode::Similarity;
  int resize_w = 0, resize_h = 0;  // 0 disables resizing
  std::string output_dir = "out";
  uint64_t seed = 1;

  InitStrategy init_strategy = InitStrategy::ConstantDepth;
  double init_depth_guess = 10.0;
  double init_pose_noise_m = 0.0;
  double init_rot_noise_deg = 0.0;
  double init_depth_noise = 0.0;
  std::string init_pose_file;

  int frame_begin = 0;
  int frame_end = -1;  // -1: to the end of the sequence
  int rpe_delta = 1;
  AlignMode eval_align = AlignMode::Rigid;
  bool color = false;

  void validate() const;
};

/// Applies key/value pairs onto a config; unknown keys are errors.
void apply_config(RunConfig* cfg, const KeyValues& kv, const std::string& context);

RunConfig parse_run_config(const KeyValues& kv, const std::string& context);

/// Canonical text form: fixed key order, one "key = value" per line.
/// serialize(parse(x)) is a fixed point.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace gpa
