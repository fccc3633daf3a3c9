#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpa/geometry.hpp"
#include "gpa/image.hpp"

namespace gpa {

/// Deterministic procedural texture over primitive-local coordinates.
struct Texture {
  enum class Kind { Noise, Checker, Mix };
  Kind kind = Kind::Noise;
  uint64_t seed = 1;
  double cell = 4.0;  // lattice / checker period (meters of local coords)
  double amp = 0.4;   // amplitude around base
  double base = 0.5;

  /// Intensity in [0,1] for channel c at local coordinates (a, b).
  double eval(double a, double b, int c = 0) const;
};

/// Finite textured rectangle: origin + s*e1 + t*e2, (s,t) in [0,1]^2.
struct PlanePrimitive {
  Vec3 origin = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  Texture tex;
  Vec3 velocity = Vec3::Zero();  // meters per frame
};

/// Axis-aligned textured box.
struct BoxPrimitive {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  Texture tex;
  Vec3 velocity = Vec3::Zero();
};

/// Static (optionally dynamic) test scene with an infinite textured
/// background plane at world z = background_depth.
struct Scene {
  std::vector<PlanePrimitive> planes;
  std::vector<BoxPrimitive> boxes;
  double background_depth = 30.0;
  Texture background_tex;
};

/// Occlusion label values: -1 no hit, 0 background, 1+i plane i,
/// 1+planes.size()+j box j.
struct RenderedFrame {
  Image image;
  DepthMap depth;  // exact ray-intersection depth along camera +z
  Pose pose;       // world-from-camera
  Grid<int> occlusion_labels;
};

/// Point-sampled render; pose maps camera coordinates into the world.
/// frame_t drives per-primitive linear motion (velocity * frame_t).
RenderedFrame render(const Scene& scene, const Pose& pose, const Intrinsics& k,
                     int frame_t = 0, int channels = 1);

std::vector<RenderedFrame> make_sequence(const Scene& scene,
                                         const std::vector<Pose>& poses,
                                         const Intrinsics& k, int channels = 1);

/// A self-contained synthetic sequence description: scene, camera and the
/// ground-truth trajectory (world-from-camera poses).
struct SyntheticSequenceSpec {
  Scene scene;
  Intrinsics k;
  std::vector<Pose> poses;
  int channels = 1;
};

/// Parses the key-value scene file format (see README for the schema).
SyntheticSequenceSpec load_scene_file(const std::string& path);

}  // namespace gpa
