#pragma once

#include <string>
#include <vector>

#include "gpa/loss.hpp"
#include "gpa/rng.hpp"

namespace gpa {

/// Optimization variables of one window: per-frame poses in the gauge of
/// frame 0 and per-anchor depth maps (updated in log-space, so positivity is
/// structural).
struct WindowState {
  std::vector<Pose> poses;      // poses[0] stays identity
  std::vector<int> anchors;     // frame indices owning depth variables
  std::vector<DepthMap> depths; // parallel to anchors
  int iteration = 0;
};

struct OptimConfig {
  int max_iters = 100;
  double step_size = 1e-3;
  double decay = 1.0;        // per-iteration multiplier on the base step
  double grad_tol = 1e-6;    // stop when the gradient norm drops below this
  double depth_lr_scale = 1.0;
  bool optimize_pose = true;
  bool optimize_depth = true;

  void validate() const;
};

struct TraceRow {
  int iteration = 0;
  double loss = 0;
  double photo_mean = 0, geo_mean = 0, smooth_mean = 0;
  double valid_fraction = 0;
  double grad_norm = 0;
  double step = 0;
};

struct OptimizeResult {
  WindowState state;
  std::vector<TraceRow> trace;  // row 0 is the initial iterate
  std::string stop_reason;
};

/// First-order descent on the window objective with per-iteration refresh of
/// selection and masks. The step backtracks (halving, up to 8 times) until
/// the loss does not increase, so the accepted-loss sequence is
/// non-increasing. Throws DegeneracyError when the initial valid set is
/// empty.
OptimizeResult optimize_window(const std::vector<Image>& frames,
                               const WindowState& init, const Intrinsics& k,
                               const LossConfig& loss_cfg,
                               const OptimConfig& opt_cfg);

WindowInputs make_window_inputs(const std::vector<Image>& frames,
                                const WindowState& state, const Intrinsics& k);

/// Identity pose chain with constant depth everywhere.
WindowState make_constant_state(int num_frames, const std::vector<int>& anchors,
                                int height, int width, double depth_guess);

/// Ground truth with fixed-magnitude random-direction pose noise (frame 0 is
/// the gauge and stays put) and per-pixel multiplicative depth noise.
WindowState perturb_state(const WindowState& gt, double trans_noise_m,
                          double rot_noise_rad, double depth_lognoise, Rng& rng);

/// State files: poses as 12-value lines at full precision, depths as f64
/// containers (one file per anchor).
WindowState read_state(const std::string& pose_path,
                       const std::vector<std::string>& depth_paths,
                       const std::vector<int>& anchors);
void write_state(const WindowState& state, const std::string& pose_path,
                 const std::vector<std::string>& depth_paths);

/// Serializes a loss trace as CSV.
std::string format_trace_csv(const std::vector<TraceRow>& trace);

}  // namespace gpa
