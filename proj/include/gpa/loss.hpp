#pragma once

#include <optional>
#include <vector>

#include "gpa/geometry.hpp"
#include "gpa/image.hpp"

namespace gpa {

/// Weights of the per-window objective. Defaults follow common
/// self-supervised depth practice; all are exposed in the run config.
struct LossConfig {
  double mu = 0.85;            // SSIM/L1 mixing weight, in [0,1]
  double lambda_geo = 0.5;     // geometric-consistency weight
  double lambda_smooth = 1e-3; // smoothness weight
  double delta = 0.0;          // auto-mask slack
  double epsilon = 1e-7;       // geometric-loss stabilizer (meters)
  SsimParams ssim;
  bool smooth_unmasked = false; // average smoothness over all depth pixels
                                // instead of the selected valid set

  void validate() const;
};

/// Per-pixel, per-source cost with its validity mask.
struct CostMap {
  Grid<double> data;
  Mask valid;

  int height() const { return data.height(); }
  int width() const { return data.width(); }
};

/// Per-pixel minimum over source views. source_index is the position in the
/// cost list handed to min_cost_select; ties break toward the lowest index.
struct SelectionResult {
  Grid<double> cost;
  Grid<int> source_index;
  Mask valid;
};

/// Pixels kept for supervision: warped reconstruction beats zero motion.
struct AutoMask {
  Mask keep;
};

/// mu * (1 - SSIM)/2 + (1ch- mu) * channel-mean L1, per pixel.
/// When mu > 0 the output validity is the input mask eroded by the SSIM
/// window so the structural term never reads values at invalid pixels.
CostMap photometric_loss(const Image& target, const Image& warped,
                         const Mask& valid, const LossConfig& cfg);

/// |D_comp - D_proj| / (D_comp + D_proj + eps), per valid pixel.
CostMap geometric_loss(const Grid<double>& comp_depth,
                       const Grid<double>& proj_depth, const Mask& valid,
                       const LossConfig& cfg);

/// photo + lambda_geo * geo; validity is the intersection.
CostMap combined_cost(const CostMap& photo, const CostMap& geo,
                      const LossConfig& cfg);

SelectionResult min_cost_select(const std::vector<CostMap>& costs);

/// keep[p] = [ min_s photo < (1+delta) * min_s identity ], with the photo
/// minimum over sources valid at p and the identity minimum over all sources.
AutoMask auto_mask(const std::vector<CostMap>& photo_losses,
                   const std::vector<CostMap>& identity_losses,
                   const LossConfig& cfg);

/// Edge-aware first-order penalty on mean-normalized disparity.
CostMap smoothness_loss(const DepthMap& depth, const Image& img);

/// One temporal window handed to the objective. poses[i] maps camera-i
/// coordinates into camera-0 coordinates (poses[0] must stay identity).
/// depths[i] is set exactly for anchor frames.
struct WindowInputs {
  Intrinsics k;
  std::vector<Image> images;
  std::vector<Pose> poses;
  std::vector<std::optional<DepthMap>> depths;
  std::vector<int> anchors;

  Pose relative_pose(int target, int source) const {
    return poses[source].inverse().compose(poses[target]);
  }
  void validate() const;
};

struct AnchorDiagnostics {
  int anchor_frame = -1;
  std::vector<int> source_frames;  // list position -> window frame index
  SelectionResult selection;
  AutoMask mask;
  Mask v_mask;        // selection.valid AND auto-mask
  int v_count = 0;
  double photo_mean = 0, geo_mean = 0, smooth_mean = 0;
  double valid_fraction = 0;
  bool degenerate = false;  // v_count == 0
};

struct TotalLossResult {
  double loss = 0;
  bool degenerate = false;  // every anchor had an empty valid set
  std::vector<AnchorDiagnostics> anchors;
};

/// Full objective over the window: for each anchor, the per-pixel minimum
/// combined cost plus weighted smoothness, averaged over the valid set, then
/// averaged over anchors. Degenerate anchors contribute zero and are flagged.
TotalLossResult total_loss(const WindowInputs& in, const LossConfig& cfg);

struct WindowGradients {
  double loss = 0;
  bool degenerate = false;
  std::vector<Vec6> pose_grad;              // per frame; [0] fixed at zero
  std::vector<Grid<double>> logdepth_grad;  // parallel to inputs.anchors
  std::vector<AnchorDiagnostics> anchors;
};

/// Analytic gradients of the objective w.r.t. the se(3) twist of every frame
/// pose (right-multiplicative perturbation) and the per-pixel log-depth of
/// every anchor. Selection indices, masks and valid sets are treated as
/// constants of the current iterate.
WindowGradients loss_gradients(const WindowInputs& in, const LossConfig& cfg);

/// Discrete structure of one evaluation, for re-evaluating the objective as
/// a smooth function of the variables (finite-difference checks).
struct FrozenStructure {
  struct Anchor {
    Mask v;
    Grid<int> sel;
    int v_count = 0;
  };
  std::vector<Anchor> anchors;
};

FrozenStructure freeze_structure(const TotalLossResult& result);

/// Objective value with selection, masks and valid sets pinned to a prior
/// evaluation; sampling is clamped so the value stays smooth in the
/// variables. Matches total_loss at the structure's defining point.
double total_loss_frozen(const WindowInputs& in, const LossConfig& cfg,
                         const FrozenStructure& frozen);

}  // namespace gpa
