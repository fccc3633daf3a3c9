#include "gpa/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpa {

namespace {

double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

/// p kept iff every clamped tap of its box window is set.
Mask erode_box(const Mask& m, int window) {
  const int h = m.height(), w = m.width();
  Mask out(h, w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (int dy = -window; dy <= window && all; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -window; dx <= window; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          if (!m(yy, xx)) {
            all = false;
            break;
          }
        }
      }
      out(y, x) = all ? 1 : 0;
    }
  return out;
}

struct SsimForward {
  Grid<double> ga, gb;                    // grayscale inputs
  Grid<double> mu_a, mu_b, m_aa, m_bb, m_ab;
  Grid<double> value;                     // unclipped SSIM
};

SsimForward ssim_forward(const Image& a, const Image& b, const SsimParams& p) {
  const int h = a.height(), w = a.width();
  SsimForward f;
  {
    const Image ga = grayscale(a), gb = grayscale(b);
    f.ga = Grid<double>(h, w);
    f.gb = Grid<double>(h, w);
    Grid<double> aa(h, w), bb(h, w), ab(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double va = ga.at(y, x), vb = gb.at(y, x);
        f.ga(y, x) = va;
        f.gb(y, x) = vb;
        aa(y, x) = va * va;
        bb(y, x) = vb * vb;
        ab(y, x) = va * vb;
      }
    f.mu_a = box_mean(f.ga, p.window);
    f.mu_b = box_mean(f.gb, p.window);
    f.m_aa = box_mean(aa, p.window);
    f.m_bb = box_mean(bb, p.window);
    f.m_ab = box_mean(ab, p.window);
  }
  f.value = Grid<double>(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ma = f.mu_a(y, x), mb = f.mu_b(y, x);
      const double var_a = f.m_aa(y, x) - ma * ma;
      const double var_b = f.m_bb(y, x) - mb * mb;
      const double cov = f.m_ab(y, x) - ma * mb;
      const double num = (2 * ma * mb + p.c1) * (2 * cov + p.c2);
      const double den = (ma * ma + mb * mb + p.c1) * (var_a + var_b + p.c2);
      f.value(y, x) = num / den;
    }
  return f;
}

/// Gradient w.r.t. the grayscale second argument, given upstream on the
/// (clipped) SSIM map. Pixels clipped out of [-1,1] pass no gradient.
Grid<double> ssim_backward_b(const SsimForward& f, const Grid<double>& upstream,
                             const SsimParams& p) {
  const int h = f.value.height(), w = f.value.width();
  Grid<double> g_mu_b(h, w, 0.0), g_m_ab(h, w, 0.0), g_m_bb(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double up = upstream(y, x);
      if (up == 0.0) continue;
      const double raw = f.value(y, x);
      if (raw < -1.0 || raw > 1.0) continue;
      const double ma = f.mu_a(y, x), mb = f.mu_b(y, x);
      const double var_a = f.m_aa(y, x) - ma * ma;
      const double var_b = f.m_bb(y, x) - mb * mb;
      const double cov = f.m_ab(y, x) - ma * mb;
      const double n = 2 * ma * mb + p.c1;
      const double m = 2 * cov + p.c2;
      const double d1 = ma * ma + mb * mb + p.c1;
      const double d2 = var_a + var_b + p.c2;
      const double inv = 1.0 / (d1 * d2);
      const double ds_dn = m * inv;
      const double ds_dm = n * inv;
      const double ds_dd1 = -n * m * inv / d1;
      const double ds_dd2 = -n * m * inv / d2;
      g_mu_b(y, x) = up * (ds_dn * 2 * ma - ds_dm * 2 * ma + ds_dd1 * 2 * mb -
                           ds_dd2 * 2 * mb);
      g_m_ab(y, x) = up * ds_dm * 2;
      g_m_bb(y, x) = up * ds_dd2;
    }
  const Grid<double> s_mu = box_mean_adjoint(g_mu_b, p.window);
  const Grid<double> s_ab = box_mean_adjoint(g_m_ab, p.window);
  const Grid<double> s_bb = box_mean_adjoint(g_m_bb, p.window);
  Grid<double> out(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = s_mu(y, x) + f.ga(y, x) * s_ab(y, x) +
                  2.0 * f.gb(y, x) * s_bb(y, x);
  return out;
}

/// Everything the forward pass of one (anchor, source) pair produces that the
/// backward pass consumes again.
struct PairRecord {
  int source_frame = -1;
  Pose t_to_s;
  WarpResult warp;
  bool has_source_depth = false;
  SsimForward ssim;      // target vs warped
  CostMap photo;
  CostMap geo;           // empty when !has_source_depth
  CostMap combined;
};

struct AnchorRecord {
  int anchor_frame = -1;
  std::vector<PairRecord> pairs;
  std::vector<CostMap> identity;  // parallel to pairs
  SelectionResult selection;
  AutoMask mask;
  Mask v;
  int v_count = 0;
  CostMap smooth;
  double disparity_mean = 0;
  int depth_valid_count = 0;
};

CostMap photometric_from_ssim(const Image& target, const Image& warped,
                              const Mask& valid, const LossConfig& cfg,
                              const SsimForward& ssim) {
  const int h = target.height(), w = target.width();
  CostMap out;
  out.data = Grid<double>(h, w, 0.0);
  out.valid = cfg.mu > 0 ? erode_box(valid, cfg.ssim.window) : valid;
  const int channels = target.channels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!out.valid(y, x)) continue;
      double l1 = 0;
      for (int c = 0; c < channels; ++c)
        l1 += std::abs(target.at(y, x, c) - warped.at(y, x, c));
      l1 /= channels;
      const double s = std::clamp(ssim.value(y, x), -1.0, 1.0);
      out.data(y, x) = cfg.mu * (1.0 - s) / 2.0 + (1.0 - cfg.mu) * l1;
    }
  return out;
}

AnchorRecord evaluate_anchor(const WindowInputs& in, const LossConfig& cfg,
                             int anchor_frame) {
  const int h = in.k.height, w = in.k.width;
  const Image& target = in.images[anchor_frame];
  const DepthMap& target_depth = *in.depths[anchor_frame];

  AnchorRecord rec;
  rec.anchor_frame = anchor_frame;
  const int s_frames = static_cast<int>(in.images.size());
  for (int s = 0; s < s_frames; ++s) {
    if (s == anchor_frame) continue;
    PairRecord pair;
    pair.source_frame = s;
    pair.t_to_s = in.relative_pose(anchor_frame, s);
    pair.has_source_depth = in.depths[s].has_value();
    pair.warp = warp(target_depth, pair.t_to_s, in.k, in.images[s],
                     pair.has_source_depth ? &*in.depths[s] : nullptr);
    pair.ssim = ssim_forward(target, pair.warp.image, cfg.ssim);
    pair.photo = photometric_from_ssim(target, pair.warp.image,
                                       pair.warp.valid, cfg, pair.ssim);
    if (pair.has_source_depth) {
      pair.geo = geometric_loss(pair.warp.comp_depth, pair.warp.proj_depth,
                                pair.warp.valid, cfg);
      pair.combined = combined_cost(pair.photo, pair.geo, cfg);
    } else {
      pair.combined = pair.photo;
    }
    // Identity reconstruction: the source at native alignment, no warp.
    Mask full(h, w, 1);
    rec.identity.push_back(
        photometric_loss(target, in.images[s], full, cfg));
    rec.pairs.push_back(std::move(pair));
  }

  std::vector<CostMap> combined, photo;
  combined.reserve(rec.pairs.size());
  photo.reserve(rec.pairs.size());
  for (auto& p : rec.pairs) {
    combined.push_back(p.combined);
    photo.push_back(p.photo);
  }
  rec.selection = min_cost_select(combined);
  rec.mask = auto_mask(photo, rec.identity, cfg);

  rec.v = Mask(h, w, 0);
  rec.v_count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rec.selection.valid(y, x) && rec.mask.keep(y, x)) {
        rec.v(y, x) = 1;
        ++rec.v_count;
      }

  rec.smooth = smoothness_loss(target_depth, target);
  double disp_sum = 0;
  rec.depth_valid_count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (target_depth.valid(y, x)) {
        disp_sum += 1.0 / target_depth.data(y, x);
        ++rec.depth_valid_count;
      }
  rec.disparity_mean = disp_sum / std::max(1, rec.depth_valid_count);
  return rec;
}

AnchorDiagnostics diagnostics_of(const AnchorRecord& rec, int h, int w) {
  AnchorDiagnostics d;
  d.anchor_frame = rec.anchor_frame;
  for (const auto& p : rec.pairs) d.source_frames.push_back(p.source_frame);
  d.selection = rec.selection;
  d.mask = rec.mask;
  d.v_mask = rec.v;
  d.v_count = rec.v_count;
  d.valid_fraction = static_cast<double>(rec.v_count) / (h * w);
  d.degenerate = rec.v_count == 0;
  if (rec.v_count > 0) {
    double photo = 0, geo = 0, smooth = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!rec.v(y, x)) continue;
        const int s = rec.selection.source_index(y, x);
        photo += rec.pairs[s].photo.data(y, x);
        if (rec.pairs[s].has_source_depth) geo += rec.pairs[s].geo.data(y, x);
        smooth += rec.smooth.data(y, x);
      }
    d.photo_mean = photo / rec.v_count;
    d.geo_mean = geo / rec.v_count;
    d.smooth_mean = smooth / rec.v_count;
  }
  return d;
}

/// Mean of the selected combined cost plus weighted smoothness over V.
double anchor_loss(const AnchorRecord& rec, const LossConfig& cfg, int h, int w) {
  if (rec.v_count == 0) return 0.0;
  double sum = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!rec.v(y, x)) continue;
      sum += rec.selection.cost(y, x);
      if (!cfg.smooth_unmasked) sum += cfg.lambda_smooth * rec.smooth.data(y, x);
    }
  double loss = sum / rec.v_count;
  if (cfg.smooth_unmasked && rec.depth_valid_count > 0) {
    double ssum = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (rec.smooth.valid(y, x)) ssum += rec.smooth.data(y, x);
    loss += cfg.lambda_smooth * ssum / rec.depth_valid_count;
  }
  return loss;
}

/// Backward pass for the smoothness term of one anchor. upstream holds the
/// weight each pixel's smoothness cost carries in the objective.
void smoothness_backward(const DepthMap& depth, const Image& img,
                         const Grid<double>& upstream, double disparity_mean,
                         int depth_valid_count, Grid<double>* grad_depth) {
  const int h = depth.height(), w = depth.width();
  const ImageGradients ig = image_gradients(img);
  const double m = disparity_mean;

  Grid<double> disp(h, w, 0.0), dstar(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (depth.valid(y, x)) {
        disp(y, x) = 1.0 / depth.data(y, x);
        dstar(y, x) = disp(y, x) / m;
      }

  Grid<double> g_dstar(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double up = upstream(y, x);
      if (up == 0.0 || !depth.valid(y, x)) continue;
      if (x < w - 1 && depth.valid(y, x + 1)) {
        const double t = dstar(y, x + 1) - dstar(y, x);
        const double s = sign0(t) * std::exp(-std::abs(ig.dx(y, x))) * up;
        g_dstar(y, x + 1) += s;
        g_dstar(y, x) -= s;
      }
      if (y < h - 1 && depth.valid(y + 1, x)) {
        const double t = dstar(y + 1, x) - dstar(y, x);
        const double s = sign0(t) * std::exp(-std::abs(ig.dy(y, x))) * up;
        g_dstar(y + 1, x) += s;
        g_dstar(y, x) -= s;
      }
    }

  // dstar = disp / m with m the mean of disp over valid pixels.
  double dot = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (depth.valid(y, x)) dot += g_dstar(y, x) * dstar(y, x);
  const double g_m_term = -dot / (m * depth_valid_count);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!depth.valid(y, x)) continue;
      const double g_disp = g_dstar(y, x) / m + g_m_term;
      const double d = depth.data(y, x);
      (*grad_depth)(y, x) += -g_disp / (d * d);
    }
}

}  // namespace

void LossConfig::validate() const {
  if (mu < 0 || mu > 1) throw InvalidArgument("LossConfig: mu must be in [0,1]");
  if (lambda_geo < 0 || lambda_smooth < 0 || delta < 0)
    throw InvalidArgument("LossConfig: weights must be non-negative");
  if (epsilon <= 0) throw InvalidArgument("LossConfig: epsilon must be positive");
  if (ssim.c1 <= 0 || ssim.c2 <= 0 || ssim.window < 1)
    throw InvalidArgument("LossConfig: invalid SSIM parameters");
}

void WindowInputs::validate() const {
  const size_t s = images.size();
  if (s < 2) throw InvalidArgument("WindowInputs: need at least two frames");
  if (poses.size() != s || depths.size() != s)
    throw InvalidArgument("WindowInputs: poses/depths must match frame count");
  if (anchors.empty()) throw InvalidArgument("WindowInputs: need at least one anchor");
  for (int a : anchors) {
    if (a < 0 || a >= static_cast<int>(s))
      throw InvalidArgument("WindowInputs: anchor index out of range");
    if (!depths[a].has_value())
      throw InvalidArgument("WindowInputs: anchor is missing a depth map");
  }
  for (const Image& img : images)
    if (img.height() != k.height || img.width() != k.width)
      throw InvalidArgument("WindowInputs: image dimensions do not match intrinsics");
  for (const auto& d : depths)
    if (d && !d->data.same_shape(k.height, k.width))
      throw InvalidArgument("WindowInputs: depth dimensions do not match intrinsics");
}

CostMap photometric_loss(const Image& target, const Image& warped,
                         const Mask& valid, const LossConfig& cfg) {
  if (!target.same_shape(warped) || !valid.same_shape(target.height(), target.width()))
    throw InvalidArgument("photometric_loss: dimensions mismatch");
  const SsimForward f = ssim_forward(target, warped, cfg.ssim);
  return photometric_from_ssim(target, warped, valid, cfg, f);
}

CostMap geometric_loss(const Grid<double>& comp_depth,
                       const Grid<double>& proj_depth, const Mask& valid,
                       const LossConfig& cfg) {
  if (!comp_depth.same_shape(proj_depth) || !valid.same_shape(comp_depth))
    throw InvalidArgument("geometric_loss: dimensions mismatch");
  const int h = comp_depth.height(), w = comp_depth.width();
  CostMap out;
  out.data = Grid<double>(h, w, 0.0);
  out.valid = valid;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!valid(y, x)) continue;
      const double a = comp_depth(y, x), b = proj_depth(y, x);
      if (a <= 0 || b <= 0)
        throw ContractViolation("geometric_loss: non-positive depth at a valid pixel");
      out.data(y, x) = std::abs(a - b) / (a + b + cfg.epsilon);
    }
  return out;
}

CostMap combined_cost(const CostMap& photo, const CostMap& geo,
                      const LossConfig& cfg) {
  if (!photo.data.same_shape(geo.data) || !photo.valid.same_shape(geo.valid) ||
      !photo.data.same_shape(photo.valid.height(), photo.valid.width()))
    throw ContractViolation("combined_cost: map shapes mismatch");
  const int h = photo.height(), w = photo.width();
  CostMap out;
  out.data = Grid<double>(h, w, 0.0);
  out.valid = Mask(h, w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (photo.valid(y, x) && geo.valid(y, x)) {
        out.valid(y, x) = 1;
        out.data(y, x) = photo.data(y, x) + cfg.lambda_geo * geo.data(y, x);
      }
  return out;
}

SelectionResult min_cost_select(const std::vector<CostMap>& costs) {
  if (costs.empty())
    throw InvalidArgument("min_cost_select: empty source list");
  const int h = costs[0].height(), w = costs[0].width();
  for (const auto& c : costs)
    if (!c.data.same_shape(costs[0].data))
      throw InvalidArgument("min_cost_select: dimensions mismatch");
  SelectionResult out;
  out.cost = Grid<double>(h, w, 0.0);
  out.source_index = Grid<int>(h, w, -1);
  out.valid = Mask(h, w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      int best_idx = -1;
      for (int s = 0; s < static_cast<int>(costs.size()); ++s) {
        if (!costs[s].valid(y, x)) continue;
        if (costs[s].data(y, x) < best) {
          best = costs[s].data(y, x);
          best_idx = s;
        }
      }
      if (best_idx >= 0) {
        out.cost(y, x) = best;
        out.source_index(y, x) = best_idx;
        out.valid(y, x) = 1;
      }
    }
  return out;
}

AutoMask auto_mask(const std::vector<CostMap>& photo_losses,
                   const std::vector<CostMap>& identity_losses,
                   const LossConfig& cfg) {
  if (photo_losses.empty() || photo_losses.size() != identity_losses.size())
    throw InvalidArgument("auto_mask: mismatched source lists");
  const int h = photo_losses[0].height(), w = photo_losses[0].width();
  for (size_t s = 0; s < photo_losses.size(); ++s)
    if (!photo_losses[s].data.same_shape(photo_losses[0].data) ||
        !identity_losses[s].data.same_shape(photo_losses[0].data))
      throw InvalidArgument("auto_mask: dimensions mismatch");
  AutoMask out{Mask(h, w, 0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double photo = std::numeric_limits<double>::infinity();
      bool any = false;
      for (const auto& c : photo_losses)
        if (c.valid(y, x)) {
          photo = std::min(photo, c.data(y, x));
          any = true;
        }
      if (!any) continue;
      double identity = std::numeric_limits<double>::infinity();
      for (const auto& c : identity_losses)
        identity = std::min(identity, c.data(y, x));
      if (photo < (1.0 + cfg.delta) * identity) out.keep(y, x) = 1;
    }
  return out;
}

CostMap smoothness_loss(const DepthMap& depth, const Image& img) {
  const int h = depth.height(), w = depth.width();
  if (img.height() != h || img.width() != w)
    throw InvalidArgument("smoothness_loss: dimensions mismatch");
  double disp_sum = 0;
  int count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (depth.valid(y, x)) {
        if (depth.data(y, x) <= 0)
          throw ContractViolation("smoothness_loss: non-positive valid depth");
        disp_sum += 1.0 / depth.data(y, x);
        ++count;
      }
  if (count == 0)
    throw ContractViolation("smoothness_loss: all depth pixels invalid");
  const double m = disp_sum / count;

  const ImageGradients ig = image_gradients(img);
  CostMap out;
  out.data = Grid<double>(h, w, 0.0);
  out.valid = depth.valid;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!depth.valid(y, x)) continue;
      const double d0 = (1.0 / depth.data(y, x)) / m;
      double cost = 0;
      if (x < w - 1 && depth.valid(y, x + 1)) {
        const double dx = (1.0 / depth.data(y, x + 1)) / m - d0;
        cost += std::abs(dx) * std::exp(-std::abs(ig.dx(y, x)));
      }
      if (y < h - 1 && depth.valid(y + 1, x)) {
        const double dy = (1.0 / depth.data(y + 1, x)) / m - d0;
        cost += std::abs(dy) * std::exp(-std::abs(ig.dy(y, x)));
      }
      out.data(y, x) = cost;
    }
  return out;
}

TotalLossResult total_loss(const WindowInputs& in, const LossConfig& cfg) {
  in.validate();
  cfg.validate();
  const int h = in.k.height, w = in.k.width;
  TotalLossResult out;
  double sum = 0;
  bool any_valid = false;
  for (int anchor : in.anchors) {
    const AnchorRecord rec = evaluate_anchor(in, cfg, anchor);
    sum += anchor_loss(rec, cfg, h, w);
    if (rec.v_count > 0) any_valid = true;
    out.anchors.push_back(diagnostics_of(rec, h, w));
  }
  out.loss = sum / static_cast<double>(in.anchors.size());
  out.degenerate = !any_valid;
  return out;
}

WindowGradients loss_gradients(const WindowInputs& in, const LossConfig& cfg) {
  in.validate();
  cfg.validate();
  const int h = in.k.height, w = in.k.width;
  const int s_frames = static_cast<int>(in.images.size());
  const int n_anchors = static_cast<int>(in.anchors.size());

  WindowGradients out;
  out.pose_grad.assign(s_frames, Vec6::Zero());
  out.logdepth_grad.assign(n_anchors, Grid<double>(h, w, 0.0));

  // Gradients w.r.t. raw depth, per frame (anchor depths can also receive
  // contributions as source maps of other anchors).
  std::vector<Grid<double>> grad_depth(s_frames);
  std::vector<int> anchor_slot(s_frames, -1);
  for (int i = 0; i < n_anchors; ++i) {
    grad_depth[in.anchors[i]] = Grid<double>(h, w, 0.0);
    anchor_slot[in.anchors[i]] = i;
  }

  double sum = 0;
  bool any_valid = false;
  for (int ai = 0; ai < n_anchors; ++ai) {
    const int anchor = in.anchors[ai];
    const AnchorRecord rec = evaluate_anchor(in, cfg, anchor);
    sum += anchor_loss(rec, cfg, h, w);
    out.anchors.push_back(diagnostics_of(rec, h, w));
    if (rec.v_count == 0) continue;
    any_valid = true;

    const double alpha = 1.0 / (static_cast<double>(n_anchors) * rec.v_count);
    const Image& target = in.images[anchor];
    const DepthMap& target_depth = *in.depths[anchor];
    const int channels = target.channels();

    for (int si = 0; si < static_cast<int>(rec.pairs.size()); ++si) {
      const PairRecord& pair = rec.pairs[si];
      const int sf = pair.source_frame;
      const Image& source_img = in.images[sf];

      // Upstream weight per pixel: alpha where this source is selected.
      Grid<double> g_sel(h, w, 0.0);
      bool any = false;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (rec.v(y, x) && rec.selection.source_index(y, x) == si) {
            g_sel(y, x) = alpha;
            any = true;
          }
      if (!any) continue;

      // Photometric: L1 part feeds the warped image directly; the SSIM part
      // goes through the box-window adjoint.
      Grid<double> ssim_up(h, w, 0.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (g_sel(y, x) != 0.0) ssim_up(y, x) = -g_sel(y, x) * cfg.mu / 2.0;
      const Grid<double> grad_gray = ssim_backward_b(pair.ssim, ssim_up, cfg.ssim);

      // Accumulate per-pixel gradients into sample coordinates and the
      // transformed point, then chain to pose twists and depths.
      const Mat3& rot = pair.t_to_s.rotation;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          // SSIM spreads gradient to warped pixels beyond the selected set;
          // erosion of the photometric valid mask guarantees such pixels
          // are warp-valid.
          double g_img_common = grad_gray(y, x) / channels;
          const double gs = g_sel(y, x);
          if (g_img_common == 0.0 && gs == 0.0) continue;
          if (!pair.warp.valid(y, x)) continue;

          // Recover the sample position.
          const double d = target_depth.data(y, x);
          const Vec3 xt = d * in.k.ray(x, y);
          const Vec3 xs = pair.t_to_s.apply(xt);
          const double z = xs.z();
          const double us = in.k.fx * xs.x() / z + in.k.cx;
          const double vs = in.k.fy * xs.y() / z + in.k.cy;

          double gu = 0, gv = 0;
          Vec3 g_xs = Vec3::Zero();

          for (int c = 0; c < channels; ++c) {
            double g_iw = g_img_common;
            if (gs != 0.0) {
              const double diff = pair.warp.image.at(y, x, c) - target.at(y, x, c);
              g_iw += gs * (1.0 - cfg.mu) * sign0(diff) / channels;
            }
            if (g_iw == 0.0) continue;
            double du, dv;
            bilinear_sample_grad(source_img, us, vs, c, nullptr, &du, &dv);
            gu += g_iw * du;
            gv += g_iw * dv;
          }

          if (gs != 0.0 && pair.has_source_depth) {
            const double a = pair.warp.comp_depth(y, x);
            const double b = pair.warp.proj_depth(y, x);
            const double s_ab = a + b + cfg.epsilon;
            const double sgn = sign0(a - b);
            const double dl_da = (sgn * s_ab - std::abs(a - b)) / (s_ab * s_ab);
            const double dl_db = (-sgn * s_ab - std::abs(a - b)) / (s_ab * s_ab);
            const double gl = gs * cfg.lambda_geo;
            g_xs.z() += gl * dl_da;

            const DepthMap& sdepth = *in.depths[sf];
            const int u0 = static_cast<int>(std::floor(us));
            const int v0 = static_cast<int>(std::floor(vs));
            const double fu = us - u0, fv = vs - v0;
            const double d00 = sdepth.data(v0, u0);
            const double d01 = sdepth.data(v0, u0 + 1);
            const double d10 = sdepth.data(v0 + 1, u0);
            const double d11 = sdepth.data(v0 + 1, u0 + 1);
            gu += gl * dl_db * ((1 - fv) * (d01 - d00) + fv * (d11 - d10));
            gv += gl * dl_db * ((1 - fu) * (d10 - d00) + fu * (d11 - d01));
            if (anchor_slot[sf] >= 0) {
              Grid<double>& gd = grad_depth[sf];
              gd(v0, u0) += gl * dl_db * (1 - fu) * (1 - fv);
              gd(v0, u0 + 1) += gl * dl_db * fu * (1 - fv);
              gd(v0 + 1, u0) += gl * dl_db * (1 - fu) * fv;
              gd(v0 + 1, u0 + 1) += gl * dl_db * fu * fv;
            }
          }

          if (gu != 0.0 || gv != 0.0) {
            g_xs.x() += in.k.fx / z * gu;
            g_xs.y() += in.k.fy / z * gv;
            g_xs.z() += -(in.k.fx * xs.x() * gu + in.k.fy * xs.y() * gv) / (z * z);
          }
          if (g_xs.isZero()) continue;

          if (anchor > 0) {
            const Vec3 g1 = rot.transpose() * g_xs;
            out.pose_grad[anchor].head<3>() += g1;
            out.pose_grad[anchor].tail<3>() += xt.cross(g1);
          }
          if (sf > 0) {
            out.pose_grad[sf].head<3>() += -g_xs;
            out.pose_grad[sf].tail<3>() += -xs.cross(g_xs);
          }
          grad_depth[anchor](y, x) += g_xs.dot(rot * in.k.ray(x, y));
        }
    }

    // Smoothness term.
    Grid<double> smooth_up(h, w, 0.0);
    if (cfg.smooth_unmasked) {
      const double u = cfg.lambda_smooth /
                       (static_cast<double>(n_anchors) * rec.depth_valid_count);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (target_depth.valid(y, x)) smooth_up(y, x) = u;
    } else {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (rec.v(y, x)) smooth_up(y, x) = alpha * cfg.lambda_smooth;
    }
    smoothness_backward(target_depth, target, smooth_up, rec.disparity_mean,
                        rec.depth_valid_count, &grad_depth[anchor]);
  }

  // Chain raw-depth gradients to log-depth.
  for (int i = 0; i < n_anchors; ++i) {
    const int f = in.anchors[i];
    const DepthMap& d = *in.depths[f];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (d.valid(y, x))
          out.logdepth_grad[i](y, x) = grad_depth[f](y, x) * d.data(y, x);
  }

  out.loss = sum / static_cast<double>(n_anchors);
  out.degenerate = !any_valid;
  return out;
}

FrozenStructure freeze_structure(const TotalLossResult& result) {
  FrozenStructure fs;
  for (const auto& a : result.anchors) {
    FrozenStructure::Anchor fa;
    fa.v = a.v_mask;
    fa.sel = a.selection.source_index;
    fa.v_count = a.v_count;
    fs.anchors.push_back(std::move(fa));
  }
  return fs;
}

double total_loss_frozen(const WindowInputs& in, const LossConfig& cfg,
                         const FrozenStructure& frozen) {
  in.validate();
  cfg.validate();
  if (frozen.anchors.size() != in.anchors.size())
    throw InvalidArgument("total_loss_frozen: structure does not match inputs");
  const int h = in.k.height, w = in.k.width;
  const int s_frames = static_cast<int>(in.images.size());

  double total = 0;
  for (size_t ai = 0; ai < in.anchors.size(); ++ai) {
    const int anchor = in.anchors[ai];
    const auto& fa = frozen.anchors[ai];
    if (fa.v_count == 0) continue;
    const Image& target = in.images[anchor];
    const DepthMap& target_depth = *in.depths[anchor];
    const int channels = target.channels();

    // Clamped warps of every source; values are smooth in the variables.
    std::vector<Image> warped;
    std::vector<Grid<double>> comp, proj;
    std::vector<Grid<double>> ssim_maps;
    std::vector<int> source_frames;
    std::vector<bool> has_depth;
    for (int s = 0; s < s_frames; ++s) {
      if (s == anchor) continue;
      const Pose t_to_s = in.relative_pose(anchor, s);
      Image iw(h, w, channels, 0.0);
      Grid<double> dcomp(h, w, 0.0), dproj(h, w, 0.0);
      const bool sd = in.depths[s].has_value();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!target_depth.valid(y, x)) continue;
          const Vec3 xt = target_depth.data(y, x) * in.k.ray(x, y);
          const Vec3 xs = t_to_s.apply(xt);
          const double z = std::max(xs.z(), kZMin);
          const double us = in.k.fx * xs.x() / z + in.k.cx;
          const double vs = in.k.fy * xs.y() / z + in.k.cy;
          for (int c = 0; c < channels; ++c)
            iw.at(y, x, c) = bilinear_sample_clamped(in.images[s], us, vs, c);
          dcomp(y, x) = xs.z();
          if (sd) {
            const int u0 = std::clamp(static_cast<int>(std::floor(us)), 0, w - 2);
            const int v0 = std::clamp(static_cast<int>(std::floor(vs)), 0, h - 2);
            const double fu = us - u0, fv = vs - v0;
            const auto& dd = in.depths[s]->data;
            dproj(y, x) = (1 - fv) * ((1 - fu) * dd(v0, u0) + fu * dd(v0, u0 + 1)) +
                          fv * ((1 - fu) * dd(v0 + 1, u0) + fu * dd(v0 + 1, u0 + 1));
          }
        }
      const SsimForward f = ssim_forward(target, iw, cfg.ssim);
      Grid<double> sm(h, w, 0.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          sm(y, x) = std::clamp(f.value(y, x), -1.0, 1.0);
      warped.push_back(std::move(iw));
      comp.push_back(std::move(dcomp));
      proj.push_back(std::move(dproj));
      ssim_maps.push_back(std::move(sm));
      source_frames.push_back(s);
      has_depth.push_back(sd);
    }

    const CostMap smooth = smoothness_loss(target_depth, target);

    double sum = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!fa.v(y, x)) continue;
        const int si = fa.sel(y, x);
        double l1 = 0;
        for (int c = 0; c < channels; ++c)
          l1 += std::abs(target.at(y, x, c) - warped[si].at(y, x, c));
        l1 /= channels;
        double cost = cfg.mu * (1.0 - ssim_maps[si](y, x)) / 2.0 +
                      (1.0 - cfg.mu) * l1;
        if (has_depth[si]) {
          const double a = comp[si](y, x), b = proj[si](y, x);
          cost += cfg.lambda_geo * std::abs(a - b) / (a + b + cfg.epsilon);
        }
        if (!cfg.smooth_unmasked) cost += cfg.lambda_smooth * smooth.data(y, x);
        sum += cost;
      }
    double anchor_term = sum / fa.v_count;
    if (cfg.smooth_unmasked) {
      double ssum = 0;
      int cnt = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (smooth.valid(y, x)) {
            ssum += smooth.data(y, x);
            ++cnt;
          }
      if (cnt > 0) anchor_term += cfg.lambda_smooth * ssum / cnt;
    }
    total += anchor_term;
  }
  return total / static_cast<double>(in.anchors.size());
}

}  // namespace gpa
