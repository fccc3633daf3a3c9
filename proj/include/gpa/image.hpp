#pragma once

#include <cassert>
#include <vector>

#include "gpa/errors.hpp"
#include "gpa/grid.hpp"

namespace gpa {

/// H x W x C intensity buffer, C in {1,3}, values in [0,1] after load.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<size_t>(height) * width * channels, fill) {
    if (channels != 1 && channels != 3)
      throw InvalidArgument("Image: channels must be 1 or 3");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_ && c >= 0 && c < channels_);
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_ && c >= 0 && c < channels_);
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  size_t size() const { return data_.size(); }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

struct SsimParams {
  double c1 = 0.01 * 0.01;  // stabilizers for [0,1]-range intensities
  double c2 = 0.03 * 0.03;
  int window = 1;  // neighborhood half-width; 1 -> 3x3 box
};

struct BilinearSample {
  double value = 0.0;
  bool in_bounds = false;
};

/// 4-tap bilinear interpolation. in_bounds is false as soon as any tap falls
/// outside the image (strict border rule, no clamping).
BilinearSample bilinear_sample(const Image& img, double u, double v, int c = 0);

/// Bilinear interpolation with taps clamped to the border; always defined.
/// Matches bilinear_sample wherever that one is in bounds.
double bilinear_sample_clamped(const Image& img, double u, double v, int c = 0);

/// Value and spatial derivative (d/du, d/dv) of the clamped interpolant.
void bilinear_sample_grad(const Image& img, double u, double v, int c,
                          double* value, double* du, double* dv);

/// Channel-mean grayscale view; returns the input unchanged when C == 1.
Image grayscale(const Image& img);

/// Per-pixel SSIM over a box window with edge replication, clipped to [-1,1].
Grid<double> ssim_map(const Image& a, const Image& b, const SsimParams& p = {});

/// Forward differences; the last column / row of the respective map is zero.
struct ImageGradients {
  Grid<double> dx;
  Grid<double> dy;
};
ImageGradients image_gradients(const Image& img);

/// Box mean over (2*window+1)^2 taps with coordinates clamped to the image.
Grid<double> box_mean(const Grid<double>& in, int window);

/// Adjoint of box_mean: scatters each output cell back onto its taps.
Grid<double> box_mean_adjoint(const Grid<double>& upstream, int window);

}  // namespace gpa
