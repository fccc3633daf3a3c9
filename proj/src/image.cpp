#include "gpa/image.hpp"

#include <algorithm>
#include <cmath>

namespace gpa {

BilinearSample bilinear_sample(const Image& img, double u, double v, int c) {
  const int u0 = static_cast<int>(std::floor(u));
  const int v0 = static_cast<int>(std::floor(v));
  if (u0 < 0 || u0 + 1 > img.width() - 1 || v0 < 0 || v0 + 1 > img.height() - 1)
    return {0.0, false};
  const double fu = u - u0, fv = v - v0;
  const double val = (1 - fv) * ((1 - fu) * img.at(v0, u0, c) + fu * img.at(v0, u0 + 1, c)) +
                     fv * ((1 - fu) * img.at(v0 + 1, u0, c) + fu * img.at(v0 + 1, u0 + 1, c));
  return {val, true};
}

double bilinear_sample_clamped(const Image& img, double u, double v, int c) {
  double value, du, dv;
  bilinear_sample_grad(img, u, v, c, &value, &du, &dv);
  return value;
}

void bilinear_sample_grad(const Image& img, double u, double v, int c,
                          double* value, double* du, double* dv) {
  const int w = img.width(), h = img.height();
  int u0 = static_cast<int>(std::floor(u));
  int v0 = static_cast<int>(std::floor(v));
  u0 = std::clamp(u0, 0, w - 2 >= 0 ? w - 2 : 0);
  v0 = std::clamp(v0, 0, h - 2 >= 0 ? h - 2 : 0);
  const int u1 = std::min(u0 + 1, w - 1);
  const int v1 = std::min(v0 + 1, h - 1);
  const double fu = u - u0, fv = v - v0;
  const double i00 = img.at(v0, u0, c), i01 = img.at(v0, u1, c);
  const double i10 = img.at(v1, u0, c), i11 = img.at(v1, u1, c);
  if (value)
    *value = (1 - fv) * ((1 - fu) * i00 + fu * i01) + fv * ((1 - fu) * i10 + fu * i11);
  if (du) *du = (1 - fv) * (i01 - i00) + fv * (i11 - i10);
  if (dv) *dv = (1 - fu) * (i10 - i00) + fu * (i11 - i01);
}

Image grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(y, x, c);
      out.at(y, x) = s / img.channels();
    }
  return out;
}

Grid<double> box_mean(const Grid<double>& in, int window) {
  const int h = in.height(), w = in.width();
  const int n = 2 * window + 1;
  Grid<double> out(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -window; dy <= window; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -window; dx <= window; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          s += in(yy, xx);
        }
      }
      out(y, x) = s / (n * n);
    }
  }
  return out;
}

Grid<double> box_mean_adjoint(const Grid<double>& upstream, int window) {
  const int h = upstream.height(), w = upstream.width();
  const int n = 2 * window + 1;
  const double inv = 1.0 / (n * n);
  Grid<double> out(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = upstream(y, x) * inv;
      if (g == 0.0) continue;
      for (int dy = -window; dy <= window; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -window; dx <= window; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          out(yy, xx) += g;
        }
      }
    }
  }
  return out;
}

Grid<double> ssim_map(const Image& a, const Image& b, const SsimParams& p) {
  if (!a.same_shape(b))
    throw InvalidArgument("ssim_map: image dimensions mismatch");
  if (p.c1 <= 0 || p.c2 <= 0 || p.window < 1)
    throw InvalidArgument("ssim_map: invalid parameters");
  const Image ga = grayscale(a), gb = grayscale(b);
  const int h = a.height(), w = a.width();

  Grid<double> xa(h, w), xb(h, w), xaa(h, w), xbb(h, w), xab(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double va = ga.at(y, x), vb = gb.at(y, x);
      xa(y, x) = va;
      xb(y, x) = vb;
      xaa(y, x) = va * va;
      xbb(y, x) = vb * vb;
      xab(y, x) = va * vb;
    }
  const Grid<double> mu_a = box_mean(xa, p.window);
  const Grid<double> mu_b = box_mean(xb, p.window);
  const Grid<double> m_aa = box_mean(xaa, p.window);
  const Grid<double> m_bb = box_mean(xbb, p.window);
  const Grid<double> m_ab = box_mean(xab, p.window);

  Grid<double> out(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ma = mu_a(y, x), mb = mu_b(y, x);
      const double var_a = m_aa(y, x) - ma * ma;
      const double var_b = m_bb(y, x) - mb * mb;
      const double cov = m_ab(y, x) - ma * mb;
      const double num = (2 * ma * mb + p.c1) * (2 * cov + p.c2);
      const double den = (ma * ma + mb * mb + p.c1) * (var_a + var_b + p.c2);
      out(y, x) = std::clamp(num / den, -1.0, 1.0);
    }
  return out;
}

ImageGradients image_gradients(const Image& img) {
  if (img.width() < 2 || img.height() < 2)
    throw InvalidArgument("image_gradients: image must be at least 2x2");
  const Image g = grayscale(img);
  const int h = g.height(), w = g.width();
  ImageGradients out{Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w - 1; ++x)
      out.dx(y, x) = g.at(y, x + 1) - g.at(y, x);
  for (int y = 0; y < h - 1; ++y)
    for (int x = 0; x < w; ++x)
      out.dy(y, x) = g.at(y + 1, x) - g.at(y, x);
  return out;
}

}  // namespace gpa
