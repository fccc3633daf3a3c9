#include "gpa/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gpa/rng.hpp"

namespace gpa {

namespace {

double lattice_value(uint64_t seed, int64_t ix, int64_t iy) {
  const uint64_t h = Rng::hash(seed, Rng::hash(static_cast<uint64_t>(ix) * 0x9e3779b9ull,
                                               static_cast<uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smootherstep(double t) { return t * t * t * (t * (6 * t - 15) + 10); }

double value_noise(uint64_t seed, double a, double b) {
  const double fa = std::floor(a), fb = std::floor(b);
  const int64_t ia = static_cast<int64_t>(fa), ib = static_cast<int64_t>(fb);
  const double ta = smootherstep(a - fa), tb = smootherstep(b - fb);
  const double v00 = lattice_value(seed, ia, ib);
  const double v01 = lattice_value(seed, ia + 1, ib);
  const double v10 = lattice_value(seed, ia, ib + 1);
  const double v11 = lattice_value(seed, ia + 1, ib + 1);
  return (1 - tb) * ((1 - ta) * v00 + ta * v01) + tb * ((1 - ta) * v10 + ta * v11);
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int label = -1;
  double tex_a = 0, tex_b = 0;
  const Texture* tex = nullptr;
};

void intersect_plane(const PlanePrimitive& p, const Vec3& offset, int label,
                     const Vec3& origin, const Vec3& dir, Hit* hit) {
  const Vec3 o = p.origin + offset;
  const Vec3 n = p.e1.cross(p.e2);
  const double denom = n.dot(dir);
  if (std::abs(denom) < 1e-12) return;
  const double t = n.dot(o - origin) / denom;
  if (t <= 1e-9 || t >= hit->t) return;
  const Vec3 q = origin + t * dir - o;
  const double e11 = p.e1.squaredNorm(), e22 = p.e2.squaredNorm(), e12 = p.e1.dot(p.e2);
  const double det = e11 * e22 - e12 * e12;
  if (std::abs(det) < 1e-15) return;
  const double q1 = q.dot(p.e1), q2 = q.dot(p.e2);
  const double s = (q1 * e22 - q2 * e12) / det;
  const double u = (q2 * e11 - q1 * e12) / det;
  if (s < 0 || s > 1 || u < 0 || u > 1) return;
  hit->t = t;
  hit->label = label;
  hit->tex_a = s * p.e1.norm();
  hit->tex_b = u * p.e2.norm();
  hit->tex = &p.tex;
}

void intersect_box(const BoxPrimitive& b, const Vec3& offset, int label,
                   const Vec3& origin, const Vec3& dir, Hit* hit) {
  const Vec3 lo = b.lo + offset, hi = b.hi + offset;
  double tmin = 1e-9, tmax = hit->t;
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir[i]) < 1e-15) {
      if (origin[i] < lo[i] || origin[i] > hi[i]) return;
      continue;
    }
    double t0 = (lo[i] - origin[i]) / dir[i];
    double t1 = (hi[i] - origin[i]) / dir[i];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = i;
    }
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return;
  }
  if (axis < 0 || tmin >= hit->t) return;
  const Vec3 q = origin + tmin * dir;
  hit->t = tmin;
  hit->label = label;
  // Texture coordinates live on the two in-face axes.
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  hit->tex_a = q[a1] - lo[a1];
  hit->tex_b = q[a2] - lo[a2];
  hit->tex = &b.tex;
}

void intersect_background(const Scene& scene, const Vec3& origin,
                          const Vec3& dir, Hit* hit) {
  if (dir.z() < 1e-12) return;
  const double t = (scene.background_depth - origin.z()) / dir.z();
  if (t <= 1e-9 || t >= hit->t) return;
  const Vec3 q = origin + t * dir;
  hit->t = t;
  hit->label = 0;
  hit->tex_a = q.x();
  hit->tex_b = q.y();
  hit->tex = &scene.background_tex;
}

}  // namespace

double Texture::eval(double a, double b, int c) const {
  const double sa = a / cell, sb = b / cell;
  double v = 0;
  switch (kind) {
    case Kind::Noise:
      v = value_noise(seed + static_cast<uint64_t>(c) * 0x517cc1b727220a95ull, sa, sb);
      break;
    case Kind::Checker: {
      const int64_t pa = static_cast<int64_t>(std::floor(sa));
      const int64_t pb = static_cast<int64_t>(std::floor(sb));
      v = ((pa + pb) & 1) ? 1.0 : 0.0;
      break;
    }
    case Kind::Mix: {
      const int64_t pa = static_cast<int64_t>(std::floor(sa));
      const int64_t pb = static_cast<int64_t>(std::floor(sb));
      const double check = ((pa + pb) & 1) ? 1.0 : 0.0;
      const double noise =
          value_noise(seed + static_cast<uint64_t>(c) * 0x517cc1b727220a95ull,
                      sa * 2.0, sb * 2.0);
      v = 0.5 * check + 0.5 * noise;
      break;
    }
  }
  return std::clamp(base + amp * (2.0 * v - 1.0), 0.0, 1.0);
}

RenderedFrame render(const Scene& scene, const Pose& pose, const Intrinsics& k,
                     int frame_t, int channels) {
  for (const auto& b : scene.boxes) {
    const Vec3 off = b.velocity * frame_t;
    const Vec3 c = pose.translation;
    if ((c.array() > (b.lo + off).array()).all() &&
        (c.array() < (b.hi + off).array()).all())
      throw InvalidArgument("render: camera inside a box primitive");
  }
  for (const auto& p : scene.planes)
    if (p.e1.cross(p.e2).squaredNorm() < 1e-18)
      throw InvalidArgument("render: degenerate plane primitive");
  for (const auto& b : scene.boxes)
    if (((b.hi - b.lo).array() <= 0).any())
      throw InvalidArgument("render: degenerate box primitive");

  RenderedFrame out;
  out.image = Image(k.height, k.width, channels);
  out.depth = DepthMap(k.height, k.width, 0.0, false);
  out.pose = pose;
  out.occlusion_labels = Grid<int>(k.height, k.width, -1);

  const Vec3 origin = pose.translation;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // Unnormalized ray with unit camera-z so the hit parameter is depth.
      const Vec3 dir = pose.rotation * k.ray(x, y);
      Hit hit;
      int label = 1;
      for (const auto& p : scene.planes)
        intersect_plane(p, p.velocity * frame_t, label++, origin, dir, &hit);
      for (const auto& b : scene.boxes)
        intersect_box(b, b.velocity * frame_t, label++, origin, dir, &hit);
      intersect_background(scene, origin, dir, &hit);
      if (hit.label < 0) continue;
      out.depth.data(y, x) = hit.t;
      out.depth.valid(y, x) = 1;
      out.occlusion_labels(y, x) = hit.label;
      for (int c = 0; c < channels; ++c)
        out.image.at(y, x, c) = hit.tex->eval(hit.tex_a, hit.tex_b, c);
    }
  }
  return out;
}

std::vector<RenderedFrame> make_sequence(const Scene& scene,
                                         const std::vector<Pose>& poses,
                                         const Intrinsics& k, int channels) {
  std::vector<RenderedFrame> out;
  out.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i)
    out.push_back(render(scene, poses[i], k, static_cast<int>(i), channels));
  return out;
}

namespace {

Texture parse_texture(std::istringstream& in, const std::string& path, int line_no) {
  Texture tex;
  std::string kind;
  if (!(in >> kind))
    throw ParseError(path + ":" + std::to_string(line_no) + ": missing texture kind");
  if (kind == "noise")
    tex.kind = Texture::Kind::Noise;
  else if (kind == "checker")
    tex.kind = Texture::Kind::Checker;
  else if (kind == "mix")
    tex.kind = Texture::Kind::Mix;
  else
    throw ParseError(path + ":" + std::to_string(line_no) + ": unknown texture kind " + kind);
  std::string kv;
  while (in >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      // Not a key=value token: hand it back by rewinding is not possible
      // with istringstream, so texture params must be last on the line
      // before the next keyword; callers split on keywords beforehand.
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad texture token " + kv);
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (key == "seed")
      tex.seed = std::stoull(value);
    else if (key == "cell")
      tex.cell = std::stod(value);
    else if (key == "amp")
      tex.amp = std::stod(value);
    else if (key == "base")
      tex.base = std::stod(value);
    else
      throw ParseError(path + ":" + std::to_string(line_no) + ": unknown texture key " + key);
  }
  return tex;
}

Vec3 parse_vec3(std::istringstream& in, const std::string& path, int line_no) {
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z()))
    throw ParseError(path + ":" + std::to_string(line_no) + ": expected three numbers");
  return v;
}

}  // namespace

SyntheticSequenceSpec load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  SyntheticSequenceSpec spec;
  double fx = 0, fy = 0, cx = -1, cy = -1;
  int width = 0, height = 0;
  int frames = 0;
  Vec3 step = Vec3::Zero();
  double yaw_step_deg = 0;
  std::string pose_file;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    key.erase(0, key.find_first_not_of(" \t"));
    std::istringstream value(line.substr(eq + 1));

    if (key == "camera.width") value >> width;
    else if (key == "camera.height") value >> height;
    else if (key == "camera.fx") value >> fx;
    else if (key == "camera.fy") value >> fy;
    else if (key == "camera.cx") value >> cx;
    else if (key == "camera.cy") value >> cy;
    else if (key == "camera.channels") value >> spec.channels;
    else if (key == "background.depth") value >> spec.scene.background_depth;
    else if (key == "background.texture")
      spec.scene.background_tex = parse_texture(value, path, line_no);
    else if (key.rfind("plane.", 0) == 0) {
      PlanePrimitive p;
      std::string word;
      while (value >> word) {
        if (word == "origin") p.origin = parse_vec3(value, path, line_no);
        else if (word == "e1") p.e1 = parse_vec3(value, path, line_no);
        else if (word == "e2") p.e2 = parse_vec3(value, path, line_no);
        else if (word == "velocity") p.velocity = parse_vec3(value, path, line_no);
        else if (word == "texture") {
          std::string rest;
          std::getline(value, rest);
          std::istringstream tex_in(rest);
          p.tex = parse_texture(tex_in, path, line_no);
          break;
        } else {
          throw ParseError(path + ":" + std::to_string(line_no) + ": unknown plane token " + word);
        }
      }
      spec.scene.planes.push_back(p);
    } else if (key.rfind("box.", 0) == 0) {
      BoxPrimitive b;
      std::string word;
      while (value >> word) {
        if (word == "min") b.lo = parse_vec3(value, path, line_no);
        else if (word == "max") b.hi = parse_vec3(value, path, line_no);
        else if (word == "velocity") b.velocity = parse_vec3(value, path, line_no);
        else if (word == "texture") {
          std::string rest;
          std::getline(value, rest);
          std::istringstream tex_in(rest);
          b.tex = parse_texture(tex_in, path, line_no);
          break;
        } else {
          throw ParseError(path + ":" + std::to_string(line_no) + ": unknown box token " + word);
        }
      }
      spec.scene.boxes.push_back(b);
    } else if (key == "trajectory.frames") value >> frames;
    else if (key == "trajectory.step") step = parse_vec3(value, path, line_no);
    else if (key == "trajectory.yaw_step_deg") value >> yaw_step_deg;
    else if (key == "trajectory.file") value >> pose_file;
    else
      throw ParseError(path + ":" + std::to_string(line_no) + ": unknown key " + key);
  }

  if (width < 2 || height < 2 || fx <= 0)
    throw ParseError(path + ": camera.{width,height,fx} are required");
  if (fy <= 0) fy = fx;
  if (cx < 0) cx = (width - 1) / 2.0;
  if (cy < 0) cy = (height - 1) / 2.0;
  spec.k = Intrinsics(fx, fy, cx, cy, width, height);

  if (!pose_file.empty()) {
    // Resolved relative to the scene file's directory.
    std::string dir;
    const auto slash = path.find_last_of('/');
    if (slash != std::string::npos) dir = path.substr(0, slash + 1);
    std::ifstream pf(dir + pose_file);
    if (!pf) throw IoError("cannot open trajectory file " + dir + pose_file);
    std::string pose_line;
    while (std::getline(pf, pose_line)) {
      if (pose_line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(pose_line);
      Pose p;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
          if (!(ls >> p.rotation(r, c))) throw ParseError(dir + pose_file + ": bad pose line");
        if (!(ls >> p.translation(r))) throw ParseError(dir + pose_file + ": bad pose line");
      }
      spec.poses.push_back(p);
    }
  } else {
    if (frames < 1)
      throw ParseError(path + ": trajectory.frames or trajectory.file required");
    Pose current = Pose::identity();
    const double yaw = yaw_step_deg * M_PI / 180.0;
    for (int i = 0; i < frames; ++i) {
      spec.poses.push_back(current);
      Twist xi;
      xi.v = step;
      xi.w = Vec3(0, yaw, 0);
      current = current.compose(Pose::exp(xi));
    }
  }
  return spec;
}

}  // namespace gpa
