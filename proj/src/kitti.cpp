#include "gpa/kitti.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpa/image_io.hpp"

namespace fs = std::filesystem;

namespace gpa {

std::map<std::string, std::vector<double>> parse_kitti_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::map<std::string, std::vector<double>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'Pi: values'");
    const std::string key = line.substr(0, colon);
    std::istringstream vs(line.substr(colon + 1));
    std::vector<double> values;
    double v;
    while (vs >> v) values.push_back(v);
    if (key.rfind("P", 0) == 0 && values.size() != 12)
      throw ParseError(path + ":" + std::to_string(line_no) + ": projection line needs 12 values, got " +
                       std::to_string(values.size()));
    out[key] = std::move(values);
  }
  if (out.empty()) throw ParseError(path + ": empty calibration file");
  return out;
}

SequenceSource load_kitti_sequence(const std::string& root, const std::string& seq_id) {
  const fs::path seq_dir = fs::path(root) / "sequences" / seq_id;
  if (!fs::is_directory(seq_dir))
    throw IoError("no such sequence directory: " + seq_dir.string());

  std::string image_dir = "image_0", proj = "P0";
  if (!fs::is_directory(seq_dir / image_dir)) {
    image_dir = "image_2";
    proj = "P2";
    if (!fs::is_directory(seq_dir / image_dir))
      throw IoError(seq_dir.string() + ": neither image_0/ nor image_2/ found");
  }

  const auto calib = parse_kitti_calib((seq_dir / "calib.txt").string());
  const auto it = calib.find(proj);
  if (it == calib.end())
    throw ParseError((seq_dir / "calib.txt").string() + ": missing " + proj + " line");
  const std::vector<double>& p = it->second;
  const double fx = p[0], cx = p[2], fy = p[5], cy = p[6];

  SequenceSource src;
  src.kind = SequenceSource::Kind::Kitti;
  src.name = seq_id;
  for (int i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", i);
    fs::path img = seq_dir / image_dir / name;
    if (!fs::exists(img)) {
      std::snprintf(name, sizeof(name), "%06d.pgm", i);
      img = seq_dir / image_dir / name;
      if (!fs::exists(img)) break;
    }
    src.image_paths.push_back(img.string());
  }
  if (src.image_paths.size() < 2)
    throw IoError(seq_dir.string() + "/" + image_dir + ": fewer than two frames");

  const Image first = load_image(src.image_paths[0]);
  src.calib = Intrinsics(fx, fy, cx, cy, first.width(), first.height());

  const fs::path pose_file = fs::path(root) / "poses" / (seq_id + ".txt");
  if (fs::exists(pose_file)) src.gt_poses = read_kitti_poses(pose_file.string());
  return src;
}

SequenceSource make_synthetic_source(const std::string& scene_path) {
  SequenceSource src;
  src.kind = SequenceSource::Kind::Synthetic;
  src.synth = load_scene_file(scene_path);
  src.calib = src.synth.k;
  src.name = fs::path(scene_path).stem().string();
  Trajectory gt;
  for (size_t i = 0; i < src.synth.poses.size(); ++i)
    gt.push(static_cast<int>(i), src.synth.poses[i]);
  src.gt_poses = gt;
  return src;
}

}  // namespace gpa
