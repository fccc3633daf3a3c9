#include "gpa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "gpa/image_io.hpp"

namespace fs = std::filesystem;

namespace gpa {

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("GPA_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

LoadedSequence load_frames(const SequenceSource& src, const RunConfig& cfg) {
  LoadedSequence out;
  const int total = src.frame_count();
  const int begin = cfg.frame_begin;
  const int end = cfg.frame_end < 0 ? total : std::min(cfg.frame_end, total);
  if (begin >= end - 1)
    throw InvalidArgument("load_frames: frame range has fewer than two frames");
  out.first_frame = begin;

  if (src.kind == SequenceSource::Kind::Synthetic) {
    // Re-render directly at the working resolution; intrinsics rescale
    // exactly, so no image resampling is involved.
    Intrinsics k = src.synth.k;
    if (cfg.resize_w > 0) k = rescale_intrinsics(k, cfg.resize_w, cfg.resize_h);
    out.k = k;
    const int channels = cfg.color ? 3 : src.synth.channels;
    for (int i = begin; i < end; ++i) {
      RenderedFrame f = render(src.synth.scene, src.synth.poses[i], k, i, channels);
      out.images.push_back(std::move(f.image));
      out.gt_depths.push_back(std::move(f.depth));
    }
  } else {
    Intrinsics k = src.calib;
    if (cfg.resize_w > 0) k = rescale_intrinsics(k, cfg.resize_w, cfg.resize_h);
    out.k = k;
    for (int i = begin; i < end; ++i) {
      Image img = load_image(src.image_paths[i], !cfg.color);
      if (cfg.resize_w > 0) img = resize_bilinear(img, cfg.resize_w, cfg.resize_h);
      out.images.push_back(std::move(img));
    }
  }

  if (src.gt_poses) {
    // Ground truth rebased to sequence-local frame ids [0, end-begin).
    Trajectory gt;
    for (const auto& e : src.gt_poses->poses)
      if (e.frame_id >= begin && e.frame_id < end)
        gt.push(e.frame_id - begin, e.pose);
    if (!gt.poses.empty()) out.gt_poses = std::move(gt);
  }
  return out;
}

namespace {

WindowState build_init(const LoadedSequence& seq, const Window& win,
                       const RunConfig& cfg, int window_index) {
  const int s = static_cast<int>(win.frame_ids.size());
  const int h = seq.k.height, w = seq.k.width;
  // Anchors arrive as window-local indices.
  std::vector<int> local_anchors = win.anchors;
  if (local_anchors.empty())
    for (int i = 0; i < s; ++i) local_anchors.push_back(i);
  for (int a : local_anchors)
    if (a < 0 || a >= s)
      throw InvalidArgument("init: anchor index outside the window");

  auto gt_relative_poses = [&]() {
    if (!seq.gt_poses)
      throw InvalidArgument("init: gt-perturbed strategy needs ground-truth poses");
    std::vector<Pose> poses;
    const Pose* base = seq.gt_poses->find(win.frame_ids[0]);
    if (!base) throw InvalidArgument("init: ground truth missing a window frame");
    const Pose base_inv = base->inverse();
    for (int f : win.frame_ids) {
      const Pose* p = seq.gt_poses->find(f);
      if (!p) throw InvalidArgument("init: ground truth missing a window frame");
      poses.push_back(base_inv.compose(*p));
    }
    return poses;
  };

  WindowState st;
  st.anchors = local_anchors;
  switch (cfg.init_strategy) {
    case InitStrategy::ConstantDepth: {
      st = make_constant_state(s, local_anchors, h, w, cfg.init_depth_guess);
      break;
    }
    case InitStrategy::GroundTruthPerturbed: {
      st.poses = gt_relative_poses();
      for (int a : local_anchors) {
        if (!seq.gt_depths.empty())
          st.depths.push_back(seq.gt_depths[win.frame_ids[a]]);
        else
          st.depths.emplace_back(h, w, cfg.init_depth_guess, true);
      }
      Rng rng = Rng(cfg.seed).fork(0x9d0u + static_cast<uint64_t>(window_index));
      st = perturb_state(st, cfg.init_pose_noise_m,
                         cfg.init_rot_noise_deg * M_PI / 180.0,
                         cfg.init_depth_noise, rng);
      break;
    }
    case InitStrategy::FileProvided: {
      if (cfg.init_pose_file.empty())
        throw InvalidArgument("init: files strategy needs init.pose_file");
      const Trajectory traj = read_kitti_poses(cfg.init_pose_file);
      const Pose* base = traj.find(win.frame_ids[0]);
      if (!base)
        throw InvalidArgument("init: pose file missing frame " +
                              std::to_string(win.frame_ids[0]));
      const Pose base_inv = base->inverse();
      for (int f : win.frame_ids) {
        const Pose* p = traj.find(f);
        if (!p)
          throw InvalidArgument("init: pose file missing frame " + std::to_string(f));
        st.poses.push_back(base_inv.compose(*p));
      }
      for (size_t i = 0; i < local_anchors.size(); ++i)
        st.depths.emplace_back(h, w, cfg.init_depth_guess, true);
      break;
    }
  }
  return st;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "unavailable";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

}  // namespace

std::string trajectory_svg(const Trajectory& est, const Trajectory* gt) {
  double min_x = 1e300, max_x = -1e300, min_z = 1e300, max_z = -1e300;
  auto extend = [&](const Trajectory& t) {
    for (const auto& e : t.poses) {
      min_x = std::min(min_x, e.pose.translation.x());
      max_x = std::max(max_x, e.pose.translation.x());
      min_z = std::min(min_z, e.pose.translation.z());
      max_z = std::max(max_z, e.pose.translation.z());
    }
  };
  extend(est);
  if (gt) extend(*gt);
  const double span = std::max({max_x - min_x, max_z - min_z, 1e-6});
  const double margin = 0.05 * span;
  min_x -= margin;
  min_z -= margin;
  const double scale = 760.0 / (span + 2 * margin);

  auto polyline = [&](const Trajectory& t, const char* color) {
    std::string s = "  <polyline fill=\"none\" stroke=\"";
    s += color;
    s += "\" stroke-width=\"2\" points=\"";
    char buf[64];
    for (const auto& e : t.poses) {
      const double px = 20 + (e.pose.translation.x() - min_x) * scale;
      const double py = 780 - (e.pose.translation.z() - min_z) * scale;
      std::snprintf(buf, sizeof(buf), "%.6g,%.6g ", px, py);
      s += buf;
    }
    s += "\"/>\n";
    return s;
  };

  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" "
      "viewBox=\"0 0 800 800\">\n"
      "  <rect width=\"800\" height=\"800\" fill=\"white\"/>\n"
      "  <text x=\"20\" y=\"30\" font-family=\"monospace\" font-size=\"16\">"
      "top-down trajectory (x right, z up)</text>\n"
      "  <text x=\"20\" y=\"52\" font-family=\"monospace\" font-size=\"14\" "
      "fill=\"#d62728\">estimate</text>\n";
  if (gt)
    svg += "  <text x=\"120\" y=\"52\" font-family=\"monospace\" font-size=\"14\" "
           "fill=\"#1f77b4\">ground truth</text>\n";
  svg += polyline(est, "#d62728");
  if (gt) svg += polyline(*gt, "#1f77b4");
  svg += "</svg>\n";
  return svg;
}

RunReport run_pipeline(const SequenceSource& src, const RunConfig& cfg) {
  cfg.validate();
  const LoadedSequence seq = load_frames(src, cfg);
  const int n = static_cast<int>(seq.images.size());

  std::vector<Window> windows = make_windows(n, cfg.window);
  // Window frame ids are sequence-local [0, n); anchors default to every
  // frame unless sampling is requested.
  for (size_t wi = 0; wi < windows.size(); ++wi) {
    if (cfg.sample_window_anchors) {
      Rng rng = Rng(cfg.window.seed != 0 ? cfg.window.seed : cfg.seed)
                    .fork(0xa5c0 + static_cast<uint64_t>(wi));
      windows[wi] = sample_anchors(windows[wi], cfg.window, rng);
      // Map global anchor ids to window-local indices.
      std::vector<int> local;
      for (int a : windows[wi].anchors) {
        const auto it = std::find(windows[wi].frame_ids.begin(),
                                  windows[wi].frame_ids.end(), a);
        local.push_back(static_cast<int>(it - windows[wi].frame_ids.begin()));
      }
      windows[wi].anchors = local;
    } else {
      windows[wi].anchors.clear();
      for (size_t i = 0; i < windows[wi].frame_ids.size(); ++i)
        windows[wi].anchors.push_back(static_cast<int>(i));
    }
  }

  std::vector<WindowRunResult> results(windows.size());
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(windows.size());
  auto work = [&]() {
    for (;;) {
      const size_t wi = next.fetch_add(1);
      if (wi >= windows.size()) return;
      try {
        const Window& win = windows[wi];
        WindowRunResult& r = results[wi];
        r.frame_ids = win.frame_ids;
        std::vector<Image> frames;
        for (int f : win.frame_ids) frames.push_back(seq.images[f]);
        Window local = win;  // anchors already window-local
        WindowState init =
            build_init(seq, local, cfg, static_cast<int>(wi));
        try {
          OptimizeResult opt =
              optimize_window(frames, init, seq.k, cfg.loss, cfg.optim);
          r.state = std::move(opt.state);
          r.trace = std::move(opt.trace);
        } catch (const DegeneracyError& e) {
          r.state = init;
          r.degenerate = true;
          r.note = e.what();
        }
      } catch (...) {
        errors[wi] = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(worker_count(), static_cast<int>(windows.size()));
  std::vector<std::thread> pool;
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<WindowPoses> chain_input;
  for (const auto& r : results) {
    WindowPoses wp;
    wp.frame_ids = r.frame_ids;
    wp.poses = r.state.poses;
    chain_input.push_back(std::move(wp));
  }

  RunReport report;
  report.frames = n;
  report.windows = static_cast<int>(windows.size());
  report.estimate =
      chain_windows(chain_input, cfg.chain_mode, true, &report.chain);
  for (const auto& r : results) {
    if (r.degenerate) {
      ++report.degenerate_windows;
      report.notes.push_back("window degenerate: " + r.note);
    }
  }

  if (seq.gt_poses) {
    report.ate_m = ate(report.estimate, *seq.gt_poses, cfg.eval_align);
    report.rpe_result = rpe(report.estimate, *seq.gt_poses, cfg.rpe_delta);
  }

  // Report files.
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_kitti_poses((dir / "trajectory.txt").string(), report.estimate);
  for (size_t wi = 0; wi < results.size(); ++wi) {
    char name[32];
    std::snprintf(name, sizeof(name), "trace_%03zu.csv", wi);
    atomic_write((dir / name).string(), format_trace_csv(results[wi].trace));
  }

  std::string metrics_csv = "metric,value\n";
  metrics_csv += "frames," + std::to_string(report.frames) + "\n";
  metrics_csv += "windows," + std::to_string(report.windows) + "\n";
  metrics_csv += "degenerate_windows," + std::to_string(report.degenerate_windows) + "\n";
  metrics_csv += "ate_m," + format_metric(report.ate_m) + "\n";
  std::optional<double> rpe_t, rpe_r;
  if (report.rpe_result) {
    rpe_t = report.rpe_result->translation_m;
    rpe_r = report.rpe_result->rotation_deg;
  }
  metrics_csv += "rpe_trans_m," + format_metric(rpe_t) + "\n";
  metrics_csv += "rpe_rot_deg," + format_metric(rpe_r) + "\n";
  atomic_write((dir / "metrics.csv").string(), metrics_csv);

  char table[256];
  std::snprintf(table, sizeof(table),
                "%-18s %12s %12s\n%-18s %12s %12s\n", "method", "ATE (m)",
                "RPE (m)", "window-chained", format_metric(report.ate_m).c_str(),
                format_metric(rpe_t).c_str());
  atomic_write((dir / "metrics.txt").string(), table);

  atomic_write((dir / "trajectory.svg").string(),
               trajectory_svg(report.estimate,
                              seq.gt_poses ? &*seq.gt_poses : nullptr));
  atomic_write((dir / "config.txt").string(), serialize_run_config(cfg));
  return report;
}

}  // namespace gpa
