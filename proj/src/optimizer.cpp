#include "gpa/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpa/image_io.hpp"

namespace gpa {

void OptimConfig::validate() const {
  if (max_iters < 1) throw InvalidArgument("OptimConfig: max_iters must be >= 1");
  if (step_size <= 0) throw InvalidArgument("OptimConfig: step_size must be positive");
  if (decay <= 0 || decay > 1)
    throw InvalidArgument("OptimConfig: decay must be in (0, 1]");
  if (grad_tol < 0) throw InvalidArgument("OptimConfig: grad_tol must be >= 0");
  if (depth_lr_scale <= 0)
    throw InvalidArgument("OptimConfig: depth_lr_scale must be positive");
  if (!optimize_pose && !optimize_depth)
    throw InvalidArgument("OptimConfig: nothing to optimize");
}

WindowInputs make_window_inputs(const std::vector<Image>& frames,
                                const WindowState& state, const Intrinsics& k) {
  if (frames.size() != state.poses.size())
    throw InvalidArgument("make_window_inputs: frame/pose count mismatch");
  if (state.anchors.size() != state.depths.size())
    throw InvalidArgument("make_window_inputs: anchor/depth count mismatch");
  WindowInputs in;
  in.k = k;
  in.images = frames;
  in.poses = state.poses;
  in.depths.assign(frames.size(), std::nullopt);
  for (size_t i = 0; i < state.anchors.size(); ++i)
    in.depths[state.anchors[i]] = state.depths[i];
  in.anchors = state.anchors;
  return in;
}

namespace {

WindowState apply_step(const WindowState& state, const WindowGradients& grads,
                       double step, const OptimConfig& cfg) {
  WindowState out = state;
  if (cfg.optimize_pose) {
    for (size_t i = 1; i < out.poses.size(); ++i) {
      const Twist xi = Twist::from_vector(-step * grads.pose_grad[i]);
      out.poses[i] = state.poses[i].perturbed(xi);
    }
  }
  if (cfg.optimize_depth) {
    const double ds = step * cfg.depth_lr_scale;
    for (size_t a = 0; a < out.depths.size(); ++a) {
      DepthMap& d = out.depths[a];
      const Grid<double>& g = grads.logdepth_grad[a];
      for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
          if (d.valid(y, x)) d.data(y, x) *= std::exp(-ds * g(y, x));
    }
  }
  return out;
}

double gradient_norm(const WindowGradients& grads, const OptimConfig& cfg) {
  double sq = 0;
  if (cfg.optimize_pose)
    for (const Vec6& g : grads.pose_grad) sq += g.squaredNorm();
  if (cfg.optimize_depth)
    for (const auto& g : grads.logdepth_grad)
      for (size_t i = 0; i < g.size(); ++i) sq += g.data()[i] * g.data()[i];
  return std::sqrt(sq);
}

TraceRow trace_row(int iteration, double loss, double grad_norm, double step,
                   const std::vector<AnchorDiagnostics>& anchors) {
  TraceRow row;
  row.iteration = iteration;
  row.loss = loss;
  row.grad_norm = grad_norm;
  row.step = step;
  for (const auto& a : anchors) {
    row.photo_mean += a.photo_mean;
    row.geo_mean += a.geo_mean;
    row.smooth_mean += a.smooth_mean;
    row.valid_fraction += a.valid_fraction;
  }
  const double n = static_cast<double>(anchors.size());
  row.photo_mean /= n;
  row.geo_mean /= n;
  row.smooth_mean /= n;
  row.valid_fraction /= n;
  return row;
}

}  // namespace

OptimizeResult optimize_window(const std::vector<Image>& frames,
                               const WindowState& init, const Intrinsics& k,
                               const LossConfig& loss_cfg,
                               const OptimConfig& opt_cfg) {
  opt_cfg.validate();
  if (!init.poses.empty() && init.poses[0].orthonormality_error() > 1e-9)
    throw InvalidArgument("optimize_window: poses[0] must be the identity gauge");

  OptimizeResult res;
  res.state = init;
  res.state.iteration = 0;

  WindowGradients grads =
      loss_gradients(make_window_inputs(frames, res.state, k), loss_cfg);
  if (grads.degenerate) {
    std::string detail;
    for (const auto& a : grads.anchors)
      detail += " anchor " + std::to_string(a.anchor_frame) + " valid " +
                std::to_string(a.v_count) + ";";
    throw DegeneracyError("optimize_window: empty valid set at init;" + detail);
  }
  double current_loss = grads.loss;
  double grad_norm = gradient_norm(grads, opt_cfg);
  res.trace.push_back(trace_row(0, current_loss, grad_norm, 0.0, grads.anchors));

  for (int iter = 1; iter <= opt_cfg.max_iters; ++iter) {
    if (grad_norm < opt_cfg.grad_tol) {
      res.stop_reason = "gradient below tolerance";
      return res;
    }
    double step = opt_cfg.step_size * std::pow(opt_cfg.decay, iter - 1);
    WindowState trial;
    TotalLossResult trial_eval;
    bool accepted = false;
    for (int bt = 0; bt <= 8; ++bt) {
      trial = apply_step(res.state, grads, step, opt_cfg);
      trial_eval = total_loss(make_window_inputs(frames, trial, k), loss_cfg);
      if (trial_eval.loss <= current_loss && !trial_eval.degenerate) {
        accepted = true;
        break;
      }
      step /= 2;
    }
    if (!accepted) {
      res.stop_reason = "no descent step found";
      return res;
    }
    res.state = trial;
    res.state.iteration = iter;
    current_loss = trial_eval.loss;
    grads = loss_gradients(make_window_inputs(frames, res.state, k), loss_cfg);
    grad_norm = gradient_norm(grads, opt_cfg);
    res.trace.push_back(
        trace_row(iter, current_loss, grad_norm, step, trial_eval.anchors));
  }
  res.stop_reason = "max iterations";
  return res;
}

WindowState make_constant_state(int num_frames, const std::vector<int>& anchors,
                                int height, int width, double depth_guess) {
  if (num_frames < 2)
    throw InvalidArgument("make_constant_state: need at least two frames");
  if (depth_guess <= 0)
    throw InvalidArgument("make_constant_state: depth guess must be positive");
  WindowState st;
  st.poses.assign(num_frames, Pose::identity());
  st.anchors = anchors;
  for (size_t i = 0; i < anchors.size(); ++i)
    st.depths.emplace_back(height, width, depth_guess, true);
  return st;
}

WindowState perturb_state(const WindowState& gt, double trans_noise_m,
                          double rot_noise_rad, double depth_lognoise, Rng& rng) {
  WindowState out = gt;
  auto unit = [&rng]() {
    // Rejection-sampled direction; deterministic given the stream.
    for (;;) {
      Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      const double n = v.norm();
      if (n > 1e-3 && n <= 1.0) return Vec3(v / n);
    }
  };
  for (size_t i = 1; i < out.poses.size(); ++i) {
    Twist xi;
    xi.v = trans_noise_m > 0 ? Vec3(trans_noise_m * unit()) : Vec3::Zero();
    xi.w = rot_noise_rad > 0 ? Vec3(rot_noise_rad * unit()) : Vec3::Zero();
    out.poses[i] = gt.poses[i].perturbed(xi);
  }
  if (depth_lognoise > 0) {
    for (auto& d : out.depths)
      for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
          if (d.valid(y, x))
            d.data(y, x) *= std::exp(depth_lognoise * rng.uniform(-1, 1));
  }
  return out;
}

WindowState read_state(const std::string& pose_path,
                       const std::vector<std::string>& depth_paths,
                       const std::vector<int>& anchors) {
  if (depth_paths.size() != anchors.size())
    throw InvalidArgument("read_state: anchor/depth-file count mismatch");
  std::ifstream in(pose_path);
  if (!in) throw IoError("cannot open " + pose_path);
  WindowState st;
  st.anchors = anchors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Pose p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) {
        double v;
        if (!(ls >> v))
          throw ParseError(pose_path + ":" + std::to_string(line_no) +
                           ": expected 12 values");
        if (c < 3)
          p.rotation(r, c) = v;
        else
          p.translation(r) = v;
      }
    st.poses.push_back(p);
  }
  for (const auto& path : depth_paths) {
    Grid<double> data = load_depth(path);
    DepthMap d;
    d.data = data;
    d.valid = Mask(data.height(), data.width(), 0);
    for (int y = 0; y < data.height(); ++y)
      for (int x = 0; x < data.width(); ++x)
        if (data(y, x) > 0) d.valid(y, x) = 1;
    st.depths.push_back(std::move(d));
  }
  return st;
}

void write_state(const WindowState& state, const std::string& pose_path,
                 const std::vector<std::string>& depth_paths) {
  if (depth_paths.size() != state.depths.size())
    throw InvalidArgument("write_state: anchor/depth-file count mismatch");
  std::string out;
  char buf[40];
  for (const Pose& p : state.poses) {
    const double v[12] = {p.rotation(0, 0), p.rotation(0, 1), p.rotation(0, 2),
                          p.translation(0), p.rotation(1, 0), p.rotation(1, 1),
                          p.rotation(1, 2), p.translation(1), p.rotation(2, 0),
                          p.rotation(2, 1), p.rotation(2, 2), p.translation(2)};
    for (int i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      out += buf;
      out += i == 11 ? '\n' : ' ';
    }
  }
  atomic_write(pose_path, out);
  for (size_t i = 0; i < state.depths.size(); ++i) {
    // Invalid pixels are stored as zero and reconstructed as invalid.
    Grid<double> data = state.depths[i].data;
    for (int y = 0; y < data.height(); ++y)
      for (int x = 0; x < data.width(); ++x)
        if (!state.depths[i].valid(y, x)) data(y, x) = 0.0;
    save_depth_f64(depth_paths[i], data);
  }
}

std::string format_trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "iteration,loss,photo_mean,geo_mean,smooth_mean,valid_fraction,grad_norm,step\n";
  char buf[200];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  r.iteration, r.loss, r.photo_mean, r.geo_mean, r.smooth_mean,
                  r.valid_fraction, r.grad_norm, r.step);
    out += buf;
  }
  return out;
}

}  // namespace gpa
