#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gpa/errors.hpp"
#include "gpa/grid.hpp"
#include "gpa/image.hpp"

namespace gpa {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Near-plane cutoff for projections; points with camera z below this are
/// treated as out of frustum.
inline constexpr double kZMin = 1e-3;

/// Pinhole camera: focal lengths and principal point in pixels.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Intrinsics() = default;
  Intrinsics(double fx, double fy, double cx, double cy, int width, int height);

  Vec3 ray(double u, double v) const {
    return {(u - cx) / fx, (v - cy) / fy, 1.0};
  }
};

/// Scales intrinsics to a new image resolution (resize, not crop).
Intrinsics rescale_intrinsics(const Intrinsics& k, int new_w, int new_h);

/// se(3) twist: translational velocity v, rotational velocity w (axis-angle).
struct Twist {
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();

  Vec6 as_vector() const;
  static Twist from_vector(const Vec6& x);
};

/// Rigid transform: X_out = rotation * X_in + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose exp(const Twist& xi);
  Twist log() const;

  Pose inverse() const;
  Pose compose(const Pose& rhs) const;  // applies rhs first, then this
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Right-multiplies by exp(xi); the perturbation convention used by the
  /// optimizer and the finite-difference checks.
  Pose perturbed(const Twist& xi) const { return compose(Pose::exp(xi)); }

  /// Max deviation of R from orthonormality / det +1.
  double orthonormality_error() const;
};

Mat3 skew(const Vec3& w);

/// Per-pixel metric depth with a validity mask. data > 0 wherever valid.
struct DepthMap {
  Grid<double> data;
  Mask valid;

  DepthMap() = default;
  DepthMap(int height, int width, double fill = 0.0, bool valid_fill = false)
      : data(height, width, fill), valid(height, width, valid_fill ? 1 : 0) {}

  int height() const { return data.height(); }
  int width() const { return data.width(); }
};

/// Per-pixel 3D points in the camera frame; invalid pixels left unset.
struct PointMap {
  Grid<Vec3> data;
  Mask valid;

  int height() const { return data.height(); }
  int width() const { return data.width(); }
};

struct ProjectionResult {
  Grid<Vec2> pixel;   // (u, v) per pixel
  Grid<double> depth; // camera-frame z
  Mask valid;         // z > kZMin and inside [0,w-1]x[0,h-1]
};

/// View synthesis output: the source image resampled onto the target grid,
/// with the two depth maps the geometric consistency check compares.
struct WarpResult {
  Image image;            // I_{t->s}
  Grid<double> proj_depth; // source depth sampled at the reprojection
  Grid<double> comp_depth; // target depth transformed into the source frame
  Mask valid;

  int height() const { return image.height(); }
  int width() const { return image.width(); }
};

PointMap backproject(const Intrinsics& k, const DepthMap& depth);

ProjectionResult project(const Intrinsics& k, const PointMap& points);

/// Warps the source image (and optionally its depth map) onto the target
/// pixel grid through the target depth and the target->source transform.
/// A pixel is valid when the target depth is valid, the transformed point is
/// in front of the near plane and all four bilinear taps land inside the
/// source frame (and on valid source depth when one is given).
WarpResult warp(const DepthMap& target_depth, const Pose& pose_t_to_s,
                const Intrinsics& k, const Image& source_img,
                const DepthMap* source_depth = nullptr);

}  // namespace gpa
