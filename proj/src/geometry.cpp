#include "gpa/geometry.hpp"

#include <cmath>

namespace gpa {

Intrinsics::Intrinsics(double fx, double fy, double cx, double cy, int width, int height)
    : fx(fx), fy(fy), cx(cx), cy(cy), width(width), height(height) {
  if (fx <= 0 || fy <= 0)
    throw InvalidArgument("Intrinsics: focal lengths must be positive");
  if (width < 1 || height < 1)
    throw InvalidArgument("Intrinsics: image size must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw InvalidArgument("Intrinsics: principal point outside the image");
}

Intrinsics rescale_intrinsics(const Intrinsics& k, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1)
    throw InvalidArgument("rescale_intrinsics: dimensions must be >= 1");
  const double sx = static_cast<double>(new_w) / k.width;
  const double sy = static_cast<double>(new_h) / k.height;
  return Intrinsics(k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, new_w, new_h);
}

Vec6 Twist::as_vector() const {
  Vec6 x;
  x << v, w;
  return x;
}

Twist Twist::from_vector(const Vec6& x) {
  return {x.head<3>(), x.tail<3>()};
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
       -w.y(), w.x(), 0;
  return m;
}

Pose Pose::exp(const Twist& xi) {
  const double theta = xi.w.norm();
  const Mat3 wx = skew(xi.w);
  Mat3 rot, vmat;
  if (theta < 1e-9) {
    // Second-order Taylor; adequate well below the sqrt(eps) crossover.
    rot = Mat3::Identity() + wx + 0.5 * wx * wx;
    vmat = Mat3::Identity() + 0.5 * wx + (1.0 / 6.0) * wx * wx;
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    rot = Mat3::Identity() + (s / theta) * wx + ((1 - c) / (theta * theta)) * wx * wx;
    vmat = Mat3::Identity() + ((1 - c) / (theta * theta)) * wx +
           ((theta - s) / (theta * theta * theta)) * wx * wx;
  }
  return {rot, vmat * xi.v};
}

Twist Pose::log() const {
  const double tr = rotation.trace();
  const double cos_theta = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
  const double theta = std::acos(cos_theta);
  Vec3 w;
  if (theta < 1e-9) {
    Mat3 a = 0.5 * (rotation - rotation.transpose());
    w = Vec3(a(2, 1), a(0, 2), a(1, 0));
  } else {
    const double s = std::sin(theta);
    Mat3 a = (theta / (2.0 * s)) * (rotation - rotation.transpose());
    w = Vec3(a(2, 1), a(0, 2), a(1, 0));
  }
  const Mat3 wx = skew(w);
  Mat3 vinv;
  if (theta < 1e-9) {
    vinv = Mat3::Identity() - 0.5 * wx + (1.0 / 12.0) * wx * wx;
  } else {
    const double half = theta / 2.0;
    const double cot_half = std::cos(half) / std::sin(half);
    vinv = Mat3::Identity() - 0.5 * wx +
           ((1.0 - half * cot_half) / (theta * theta)) * wx * wx;
  }
  return {vinv * translation, w};
}

Pose Pose::inverse() const {
  Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

Pose Pose::compose(const Pose& rhs) const {
  return {rotation * rhs.rotation, rotation * rhs.translation + translation};
}

double Pose::orthonormality_error() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity())
                           .cwiseAbs().maxCoeff();
  const double det = std::abs(rotation.determinant() - 1.0);
  return std::max(ortho, det);
}

PointMap backproject(const Intrinsics& k, const DepthMap& depth) {
  if (!depth.data.same_shape(k.height, k.width))
    throw InvalidArgument("backproject: depth dimensions do not match intrinsics");
  PointMap out;
  out.data = Grid<Vec3>(depth.height(), depth.width(), Vec3::Zero());
  out.valid = depth.valid;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(y, x)) continue;
      out.data(y, x) = depth.data(y, x) * k.ray(x, y);
    }
  }
  return out;
}

ProjectionResult project(const Intrinsics& k, const PointMap& points) {
  ProjectionResult out;
  const int h = points.height(), w = points.width();
  out.pixel = Grid<Vec2>(h, w, Vec2::Zero());
  out.depth = Grid<double>(h, w, 0.0);
  out.valid = Mask(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!points.valid(y, x)) continue;
      const Vec3& p = points.data(y, x);
      if (p.z() <= kZMin) continue;
      const double u = k.fx * p.x() / p.z() + k.cx;
      const double v = k.fy * p.y() / p.z() + k.cy;
      out.pixel(y, x) = Vec2(u, v);
      out.depth(y, x) = p.z();
      if (u >= 0 && u <= k.width - 1 && v >= 0 && v <= k.height - 1)
        out.valid(y, x) = 1;
    }
  }
  return out;
}

WarpResult warp(const DepthMap& target_depth, const Pose& pose_t_to_s,
                const Intrinsics& k, const Image& source_img,
                const DepthMap* source_depth) {
  const int h = k.height, w = k.width;
  if (!target_depth.data.same_shape(h, w) || source_img.height() != h ||
      source_img.width() != w)
    throw InvalidArgument("warp: buffer dimensions do not match intrinsics");
  if (source_depth && !source_depth->data.same_shape(h, w))
    throw InvalidArgument("warp: source depth dimensions mismatch");

  WarpResult out;
  out.image = Image(h, w, source_img.channels(), 0.0);
  out.proj_depth = Grid<double>(h, w, 0.0);
  out.comp_depth = Grid<double>(h, w, 0.0);
  out.valid = Mask(h, w, 0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!target_depth.valid(y, x)) continue;
      const Vec3 xt = target_depth.data(y, x) * k.ray(x, y);
      const Vec3 xs = pose_t_to_s.apply(xt);
      if (xs.z() <= kZMin) continue;
      const double u = k.fx * xs.x() / xs.z() + k.cx;
      const double v = k.fy * xs.y() / xs.z() + k.cy;

      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      if (u0 < 0 || u0 + 1 > w - 1 || v0 < 0 || v0 + 1 > h - 1) continue;

      if (source_depth) {
        if (!source_depth->valid(v0, u0) || !source_depth->valid(v0, u0 + 1) ||
            !source_depth->valid(v0 + 1, u0) || !source_depth->valid(v0 + 1, u0 + 1))
          continue;
        const double fu = u - u0, fv = v - v0;
        const double d00 = source_depth->data(v0, u0);
        const double d01 = source_depth->data(v0, u0 + 1);
        const double d10 = source_depth->data(v0 + 1, u0);
        const double d11 = source_depth->data(v0 + 1, u0 + 1);
        out.proj_depth(y, x) = (1 - fv) * ((1 - fu) * d00 + fu * d01) +
                               fv * ((1 - fu) * d10 + fu * d11);
      }
      for (int c = 0; c < source_img.channels(); ++c) {
        const double fu = u - u0, fv = v - v0;
        const double i00 = source_img.at(v0, u0, c);
        const double i01 = source_img.at(v0, u0 + 1, c);
        const double i10 = source_img.at(v0 + 1, u0, c);
        const double i11 = source_img.at(v0 + 1, u0 + 1, c);
        out.image.at(y, x, c) = (1 - fv) * ((1 - fu) * i00 + fu * i01) +
                                fv * ((1 - fu) * i10 + fu * i11);
      }
      out.comp_depth(y, x) = xs.z();
      out.valid(y, x) = 1;
    }
  }
  return out;
}

}  // namespace gpa
