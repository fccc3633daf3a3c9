#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gpa/gradcheck.hpp"
#include "gpa/image_io.hpp"
#include "gpa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gpa;

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 usage error,
// 3 gradient-check failure.
constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;
constexpr int kCheckFailed = 3;

RunConfig load_config(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty())
    apply_config(&cfg, parse_config_file(config_path), config_path);
  KeyValues kv;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos)
      throw ParseError("override must look like key=value: " + o);
    kv.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  apply_config(&cfg, kv, "<command line>");
  cfg.validate();
  return cfg;
}

SequenceSource open_source(const std::string& kitti_root, const std::string& seq,
                           const std::string& scene) {
  if (!scene.empty()) return make_synthetic_source(scene);
  if (kitti_root.empty() || seq.empty())
    throw InvalidArgument("either --scene or --kitti-root with --seq is required");
  return load_kitti_sequence(kitti_root, seq);
}

int cmd_synth(const std::string& scene, const std::string& out_dir) {
  const SyntheticSequenceSpec spec = load_scene_file(scene);
  fs::create_directories(out_dir);
  Trajectory traj;
  for (size_t i = 0; i < spec.poses.size(); ++i) {
    const RenderedFrame f =
        render(spec.scene, spec.poses[i], spec.k, static_cast<int>(i), spec.channels);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    save_png((fs::path(out_dir) / name).string(), f.image);
    std::snprintf(name, sizeof(name), "depth_%06zu.bin", i);
    save_depth_f32((fs::path(out_dir) / name).string(), f.depth.data);
    traj.push(static_cast<int>(i), spec.poses[i]);
  }
  write_kitti_poses((fs::path(out_dir) / "gt.txt").string(), traj);
  std::printf("wrote %zu frames to %s\n", spec.poses.size(), out_dir.c_str());
  return kOk;
}

int cmd_optimize(const SequenceSource& src, const RunConfig& cfg, int start) {
  LoadedSequence seq = load_frames(src, cfg);
  const int s = cfg.window.window_len;
  if (start < 0 || start + (s - 1) * cfg.window.temporal_stride >=
                       static_cast<int>(seq.images.size()))
    throw InvalidArgument("optimize: window start out of range");

  RunConfig one = cfg;
  one.frame_begin = cfg.frame_begin + start;
  one.frame_end = one.frame_begin + (s - 1) * cfg.window.temporal_stride + 1;
  seq = load_frames(src, one);

  Window win;
  for (int j = 0; j < s; ++j) win.frame_ids.push_back(j * cfg.window.temporal_stride);
  for (int j = 0; j < s; ++j) win.anchors.push_back(j);

  std::vector<Image> frames;
  for (int f : win.frame_ids) frames.push_back(seq.images[f]);

  WindowState init = make_constant_state(s, win.anchors, seq.k.height,
                                         seq.k.width, cfg.init_depth_guess);
  const OptimizeResult res = optimize_window(frames, init, seq.k, cfg.loss, cfg.optim);

  fs::create_directories(cfg.output_dir);
  atomic_write((fs::path(cfg.output_dir) / "trace.csv").string(),
               format_trace_csv(res.trace));
  Trajectory traj;
  for (size_t i = 0; i < res.state.poses.size(); ++i)
    traj.push(static_cast<int>(i), res.state.poses[i]);
  write_kitti_poses((fs::path(cfg.output_dir) / "window_poses.txt").string(), traj);
  std::printf("window optimized: %zu accepted iterations, final loss %.6g (%s)\n",
              res.trace.size() - 1, res.trace.back().loss, res.stop_reason.c_str());
  return kOk;
}

int cmd_chain(const std::string& manifest, ChainMode mode, const std::string& out) {
  // Manifest: one "start_frame pose_file" pair per line.
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest);
  std::vector<WindowPoses> windows;
  std::string line;
  int line_no = 0;
  const fs::path base = fs::path(manifest).parent_path();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int start;
    std::string file;
    if (!(ls >> start >> file))
      throw ParseError(manifest + ":" + std::to_string(line_no) +
                       ": expected 'start_frame pose_file'");
    const Trajectory t = read_kitti_poses((base / file).string());
    WindowPoses wp;
    for (const auto& e : t.poses) {
      wp.frame_ids.push_back(start + e.frame_id);
      wp.poses.push_back(e.pose);
    }
    windows.push_back(std::move(wp));
  }
  if (windows.empty()) throw ParseError(manifest + ": no windows listed");
  ChainReport report;
  const Trajectory chained = chain_windows(windows, mode, true, &report);
  write_kitti_poses(out, chained);
  std::printf("chained %zu windows (%d umeyama, %d composition, %d fallbacks) -> %s\n",
              windows.size(), report.umeyama_windows, report.composition_windows,
              report.degenerate_fallbacks, out.c_str());
  return kOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             AlignMode align, int delta) {
  const Trajectory est = read_kitti_poses(est_path);
  const Trajectory gt = read_kitti_poses(gt_path);
  const double a = ate(est, gt, align);
  const RpeResult r = rpe(est, gt, delta);
  std::printf("ATE   %.6f m\n", a);
  std::printf("RPE   %.6f m  %.6f deg (delta %d)\n", r.translation_m,
              r.rotation_deg, delta);
  return kOk;
}

int cmd_run(const SequenceSource& src, const RunConfig& cfg) {
  const RunReport report = run_pipeline(src, cfg);
  std::printf("frames %d, windows %d (%d degenerate)\n", report.frames,
              report.windows, report.degenerate_windows);
  if (report.ate_m)
    std::printf("ATE %.6f m, RPE %.6f m / %.6f deg\n", *report.ate_m,
                report.rpe_result->translation_m, report.rpe_result->rotation_deg);
  else
    std::printf("metrics unavailable (no ground truth)\n");
  std::printf("report written to %s\n", cfg.output_dir.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometry- and physics-aware window optimization over image sequences"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--set", overrides, "config override key=value (repeatable)");

  std::string kitti_root, seq_id, scene_path, out_path = "out";

  auto* synth = app.add_subcommand("synth", "render a synthetic scene sequence");
  synth->add_option("--scene", scene_path, "scene description file")->required();
  synth->add_option("-o,--out", out_path, "output directory");

  auto* optimize = app.add_subcommand("optimize", "optimize a single window");
  int window_start = 0;
  optimize->add_option("--kitti-root", kitti_root, "KITTI odometry root");
  optimize->add_option("--seq", seq_id, "KITTI sequence id");
  optimize->add_option("--scene", scene_path, "synthetic scene file");
  optimize->add_option("--start", window_start, "window start frame");

  auto* chain = app.add_subcommand("chain", "chain window pose files");
  std::string manifest, chain_mode = "similarity";
  chain->add_option("manifest", manifest, "file of 'start_frame pose_file' lines")
      ->required();
  chain->add_option("--mode", chain_mode, "rigid|similarity");
  chain->add_option("-o,--out", out_path, "output trajectory file");

  auto* eval = app.add_subcommand("eval", "ATE/RPE between two pose files");
  std::string est_path, gt_path, align = "rigid";
  int rpe_delta = 1;
  eval->add_option("est", est_path, "estimated trajectory")->required();
  eval->add_option("gt", gt_path, "ground-truth trajectory")->required();
  eval->add_option("--align", align, "rigid|similarity");
  eval->add_option("--rpe-delta", rpe_delta, "RPE frame delta");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  uint64_t gc_seed = 7;
  int gc_configs = 50;
  double gc_tol = 1e-3;
  bool gc_verbose = false;
  gradcheck->add_option("--seed", gc_seed, "RNG seed");
  gradcheck->add_option("--configs", gc_configs, "number of random configurations");
  gradcheck->add_option("--tol", gc_tol, "relative tolerance");
  gradcheck->add_flag("--verbose", gc_verbose, "per-configuration output");

  auto* run = app.add_subcommand("run", "full pipeline");
  run->add_option("--kitti-root", kitti_root, "KITTI odometry root");
  run->add_option("--seq", seq_id, "KITTI sequence id");
  run->add_option("--scene", scene_path, "synthetic scene file");
  run->add_option("-o,--out", out_path, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kUsageError;
  }

  try {
    RunConfig cfg = load_config(config_path, overrides);
    if (synth->parsed()) return cmd_synth(scene_path, out_path);
    if (optimize->parsed()) {
      cfg.output_dir = out_path == "out" ? cfg.output_dir : out_path;
      return cmd_optimize(open_source(kitti_root, seq_id, scene_path), cfg,
                          window_start);
    }
    if (chain->parsed())
      return cmd_chain(manifest,
                       chain_mode == "rigid" ? ChainMode::Rigid : ChainMode::Similarity,
                       out_path);
    if (eval->parsed())
      return cmd_eval(est_path, gt_path,
                      align == "similarity" ? AlignMode::Similarity : AlignMode::Rigid,
                      rpe_delta);
    if (gradcheck->parsed()) {
      const GradCheckSummary summary =
          run_gradient_check(gc_seed, gc_configs, gc_tol, gc_verbose);
      std::printf("gradcheck: %d/%d components within %.1e (worst %.3e)\n",
                  summary.passed, summary.total, gc_tol, summary.worst_rel_error);
      return summary.passed == summary.total ? kOk : kCheckFailed;
    }
    if (run->parsed()) {
      if (out_path != "out") cfg.output_dir = out_path;
      return cmd_run(open_source(kitti_root, seq_id, scene_path), cfg);
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kUsageError;
}
