#include "gpa/trajectory.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gpa/image_io.hpp"

namespace gpa {

void Trajectory::push(int frame_id, const Pose& pose) {
  if (!poses.empty() && frame_id <= poses.back().frame_id)
    throw InvalidArgument("Trajectory: frame ids must be strictly increasing");
  poses.push_back({frame_id, pose});
}

const Pose* Trajectory::find(int frame_id) const {
  auto it = std::lower_bound(
      poses.begin(), poses.end(), frame_id,
      [](const TrajectoryEntry& e, int id) { return e.frame_id < id; });
  if (it == poses.end() || it->frame_id != frame_id) return nullptr;
  return &it->pose;
}

namespace {

struct UmeyamaSolution {
  AlignTransform transform;
  double sigma2_ratio = 0;  // second / first singular value of the covariance
};

UmeyamaSolution umeyama_closed_form(const std::vector<Vec3>& src,
                                    const std::vector<Vec3>& dst,
                                    bool with_scale) {
  const size_t n = src.size();
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= static_cast<double>(n);
  mu_d /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();
  double var_src = 0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 s = src[i] - mu_s;
    const Vec3 d = dst[i] - mu_d;
    sigma += d * s.transpose();
    var_src += s.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s_fix = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0)
    s_fix(2, 2) = -1.0;

  UmeyamaSolution sol;
  sol.transform.rotation = svd.matrixU() * s_fix * svd.matrixV().transpose();
  if (with_scale) {
    if (var_src <= 0)
      throw DegeneracyError("umeyama: zero source variance, scale undefined");
    sol.transform.scale = (svd.singularValues().asDiagonal() * s_fix).trace() / var_src;
    if (sol.transform.scale <= 0)
      throw DegeneracyError("umeyama: non-positive recovered scale");
  }
  sol.transform.translation =
      mu_d - sol.transform.scale * (sol.transform.rotation * mu_s);
  const double s0 = svd.singularValues()(0);
  sol.sigma2_ratio = s0 > 0 ? svd.singularValues()(1) / s0 : 0.0;
  return sol;
}

}  // namespace

AlignTransform umeyama_align(const std::vector<Vec3>& src_points,
                             const std::vector<Vec3>& dst_points,
                             bool with_scale) {
  if (src_points.size() != dst_points.size())
    throw InvalidArgument("umeyama_align: point counts differ");
  if (src_points.size() < 3)
    throw DegeneracyError("umeyama_align: need at least 3 point pairs");
  const UmeyamaSolution sol =
      umeyama_closed_form(src_points, dst_points, with_scale);
  if (sol.sigma2_ratio < 1e-9)
    throw DegeneracyError("umeyama_align: collinear points, rotation ambiguous");
  return sol.transform;
}

Trajectory chain_windows(const std::vector<WindowPoses>& windows,
                         ChainMode mode, bool allow_fallback,
                         ChainReport* report) {
  if (windows.empty())
    throw InvalidArgument("chain_windows: empty window list");
  const bool similarity = mode == ChainMode::Similarity;

  std::map<int, Pose> global;
  for (size_t i = 0; i < windows[0].frame_ids.size(); ++i)
    global[windows[0].frame_ids[i]] = windows[0].poses[i];

  for (size_t w = 1; w < windows.size(); ++w) {
    const WindowPoses& win = windows[w];
    if (win.frame_ids.size() != win.poses.size())
      throw InvalidArgument("chain_windows: malformed window poses");

    std::vector<int> overlap;
    for (int f : win.frame_ids)
      if (global.count(f)) overlap.push_back(f);
    if (overlap.empty())
      throw InvalidArgument("chain_windows: window " + std::to_string(w) +
                            " shares no frame with the chained trajectory");

    auto local_pose = [&win](int frame_id) {
      const auto it =
          std::find(win.frame_ids.begin(), win.frame_ids.end(), frame_id);
      return win.poses[it - win.frame_ids.begin()];
    };

    AlignTransform a;
    bool solved = false;
    if (overlap.size() >= 3) {
      std::vector<Vec3> loc, glob;
      for (int f : overlap) {
        loc.push_back(local_pose(f).translation);
        glob.push_back(global.at(f).translation);
      }
      try {
        a = umeyama_align(loc, glob, similarity);
        solved = true;
        if (report) ++report->umeyama_windows;
      } catch (const DegeneracyError& e) {
        if (!allow_fallback) throw;
        if (report) {
          ++report->degenerate_fallbacks;
          report->notes.push_back("window " + std::to_string(w) + ": " + e.what());
        }
      }
    }
    if (!solved) {
      // Compose through the latest shared frame; two shared frames pin the
      // scale via the distance ratio of their camera centers.
      const int anchor = overlap.back();
      double scale = 1.0;
      if (similarity && overlap.size() >= 2) {
        const int other = overlap[overlap.size() - 2];
        const double d_loc =
            (local_pose(anchor).translation - local_pose(other).translation).norm();
        const double d_glob =
            (global.at(anchor).translation - global.at(other).translation).norm();
        if (d_loc > 1e-12) {
          scale = d_glob / d_loc;
        } else if (!allow_fallback) {
          throw DegeneracyError(
              "chain_windows: coincident shared centers, scale unobservable");
        } else if (report) {
          ++report->degenerate_fallbacks;
          report->notes.push_back("window " + std::to_string(w) +
                                  ": coincident shared centers, kept scale 1");
        }
      }
      const Pose l = local_pose(anchor);
      const Pose& g = global.at(anchor);
      a.scale = scale;
      a.rotation = g.rotation * l.rotation.transpose();
      a.translation = g.translation - scale * (a.rotation * l.translation);
      if (report) ++report->composition_windows;
    }

    for (size_t i = 0; i < win.frame_ids.size(); ++i) {
      const int f = win.frame_ids[i];
      if (global.count(f)) continue;  // first window to see a frame wins
      global[f] = a.apply_pose(win.poses[i]);
    }
  }

  Trajectory out;
  for (const auto& [frame_id, pose] : global) out.push(frame_id, pose);
  return out;
}

namespace {

std::vector<int> common_frames(const Trajectory& a, const Trajectory& b) {
  std::vector<int> out;
  for (const auto& e : a.poses)
    if (b.find(e.frame_id)) out.push_back(e.frame_id);
  return out;
}

}  // namespace

double ate(const Trajectory& est, const Trajectory& gt, AlignMode align_mode) {
  const std::vector<int> common = common_frames(est, gt);
  if (common.empty())
    throw InvalidArgument("ate: trajectories share no frames");

  std::vector<Vec3> src, dst;
  for (int f : common) {
    src.push_back(est.find(f)->translation);
    dst.push_back(gt.find(f)->translation);
  }

  AlignTransform a;
  if (src.size() < 3) {
    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
      mu_s += src[i];
      mu_d += dst[i];
    }
    a.translation = (mu_d - mu_s) / static_cast<double>(src.size());
  } else {
    // The closed form minimizes the residual even when the configuration is
    // rank-deficient; the minimizer is ambiguous but its value is not.
    a = umeyama_closed_form(src, dst, align_mode == AlignMode::Similarity).transform;
  }

  double sq = 0;
  for (size_t i = 0; i < src.size(); ++i)
    sq += (a.apply_point(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(src.size()));
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta) {
  if (delta < 1) throw InvalidArgument("rpe: delta must be >= 1");
  const std::vector<int> common = common_frames(est, gt);
  if (static_cast<int>(common.size()) < delta + 1)
    throw InvalidArgument("rpe: not enough common frames for the given delta");

  double sq_t = 0, sq_r = 0;
  const int n = static_cast<int>(common.size()) - delta;
  for (int i = 0; i < n; ++i) {
    const Pose& e0 = *est.find(common[i]);
    const Pose& e1 = *est.find(common[i + delta]);
    const Pose& g0 = *gt.find(common[i]);
    const Pose& g1 = *gt.find(common[i + delta]);
    const Pose rel_est = e0.inverse().compose(e1);
    const Pose rel_gt = g0.inverse().compose(g1);
    const Pose err = rel_gt.inverse().compose(rel_est);
    sq_t += err.translation.squaredNorm();
    const double c = std::clamp((err.rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double ang = std::acos(c);
    sq_r += ang * ang;
  }
  RpeResult out;
  out.translation_m = std::sqrt(sq_t / n);
  out.rotation_deg = std::sqrt(sq_r / n) * 180.0 / M_PI;
  return out;
}

Pose parse_pose_line(const std::string& line, const std::string& context) {
  std::istringstream in(line);
  double v[12];
  for (int i = 0; i < 12; ++i)
    if (!(in >> v[i]))
      throw ParseError(context + ": expected 12 pose values, got " +
                       std::to_string(i));
  double extra;
  if (in >> extra)
    throw ParseError(context + ": more than 12 pose values");
  Pose p;
  p.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  p.translation << v[3], v[7], v[11];
  return p;
}

Trajectory read_kitti_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Trajectory out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push(static_cast<int>(out.size()),
             parse_pose_line(line, path + ":" + std::to_string(line_no)));
  }
  if (out.poses.empty()) throw ParseError(path + ": no poses found");
  return out;
}

std::string format_kitti_poses(const Trajectory& traj) {
  std::string out;
  char buf[32];
  for (const auto& e : traj.poses) {
    const Mat3& r = e.pose.rotation;
    const Vec3& t = e.pose.translation;
    const double v[12] = {r(0, 0), r(0, 1), r(0, 2), t(0), r(1, 0), r(1, 1),
                          r(1, 2), t(1),   r(2, 0), r(2, 1), r(2, 2), t(2)};
    for (int i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", v[i]);
      out += buf;
      out += i == 11 ? '\n' : ' ';
    }
  }
  return out;
}

void write_kitti_poses(const std::string& path, const Trajectory& traj) {
  atomic_write(path, format_kitti_poses(traj));
}

}  // namespace gpa
