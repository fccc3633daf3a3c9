#include "gpa/gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "gpa/rng.hpp"
#include "gpa/synthworld.hpp"

namespace gpa {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kAbsFloor = 1e-7;

Scene random_scene(Rng& rng) {
  Scene scene;
  scene.background_depth = rng.uniform(22.0, 35.0);
  scene.background_tex = {Texture::Kind::Noise, rng.next_u64(), rng.uniform(3.0, 6.0),
                          rng.uniform(0.3, 0.45), 0.5};

  // A ground plane plus a couple of fronto-ish structures at varied depths.
  PlanePrimitive ground;
  ground.origin = Vec3(-12, 1.4, 0.5);
  ground.e1 = Vec3(24, 0, 0);
  ground.e2 = Vec3(0, 0, 40);
  ground.tex = {Texture::Kind::Noise, rng.next_u64(), rng.uniform(0.8, 1.6),
                rng.uniform(0.3, 0.45), 0.5};
  scene.planes.push_back(ground);

  const int n_boxes = 2 + static_cast<int>(rng.below(2));
  for (int i = 0; i < n_boxes; ++i) {
    BoxPrimitive box;
    const double z = rng.uniform(4.0, 11.0);
    const double x = rng.uniform(-3.0, 3.0);
    const double y = rng.uniform(-1.0, 0.5);
    box.lo = Vec3(x - rng.uniform(0.6, 1.4), y - rng.uniform(0.5, 1.0), z);
    box.hi = Vec3(x + rng.uniform(0.6, 1.4), y + rng.uniform(0.5, 1.0),
                  z + rng.uniform(0.8, 2.0));
    box.tex = {Texture::Kind::Noise, rng.next_u64(), rng.uniform(0.3, 0.7),
               rng.uniform(0.3, 0.45), 0.5};
    scene.boxes.push_back(box);
  }
  return scene;
}

WindowInputs random_window(Rng& rng, const LossConfig& cfg) {
  (void)cfg;
  const Intrinsics k(46.0, 46.0, 27.5, 19.5, 56, 40);
  const Scene scene = random_scene(rng);

  const int s = 3;
  std::vector<Pose> gt;
  Pose current = Pose::identity();
  for (int i = 0; i < s; ++i) {
    gt.push_back(current);
    Twist step;
    step.v = Vec3(rng.uniform(-0.15, 0.15), rng.uniform(-0.05, 0.05),
                  rng.uniform(0.1, 0.3));
    step.w = Vec3(rng.uniform(-0.008, 0.008), rng.uniform(-0.015, 0.015),
                  rng.uniform(-0.004, 0.004));
    current = current.compose(Pose::exp(step));
  }

  WindowInputs in;
  in.k = k;
  in.poses.resize(s);
  in.depths.resize(s);
  for (int i = 0; i < s; ++i) {
    const RenderedFrame f = render(scene, gt[i], k, i);
    in.images.push_back(f.image);
    // Window gauge: poses relative to frame 0.
    in.poses[i] = gt[0].inverse().compose(gt[i]);
    if (i != 1) {  // anchors 0 and 2; frame 1 is a depth-less source
      DepthMap d = f.depth;
      for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
          if (d.valid(y, x))
            d.data(y, x) *= std::exp(rng.uniform(-0.02, 0.02));
      in.depths[i] = std::move(d);
    }
  }
  in.anchors = {0, 2};

  // Evaluate away from the ground-truth optimum.
  for (int i = 1; i < s; ++i) {
    Twist noise;
    noise.v = Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                   rng.uniform(-0.02, 0.02));
    noise.w = Vec3(rng.uniform(-0.005, 0.005), rng.uniform(-0.005, 0.005),
                   rng.uniform(-0.005, 0.005));
    in.poses[i] = in.poses[i].perturbed(noise);
  }
  return in;
}

bool check_component(double analytic, double fd, double tol, double* rel_out) {
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  const double err = std::abs(analytic - fd);
  *rel_out = scale > 0 ? err / scale : 0.0;
  return err <= tol * scale + kAbsFloor;
}

}  // namespace

GradCheckSummary run_gradient_check(uint64_t seed, int num_configs, double tol,
                                    bool verbose) {
  GradCheckSummary summary;
  summary.configs = num_configs;
  LossConfig cfg;  // defaults

  for (int c = 0; c < num_configs; ++c) {
    Rng rng = Rng(seed).fork(1000 + static_cast<uint64_t>(c));
    const WindowInputs base = random_window(rng, cfg);

    const WindowGradients grads = loss_gradients(base, cfg);
    FrozenStructure frozen;
    for (const auto& a : grads.anchors) {
      FrozenStructure::Anchor fa;
      fa.v = a.v_mask;
      fa.sel = a.selection.source_index;
      fa.v_count = a.v_count;
      frozen.anchors.push_back(std::move(fa));
    }

    auto frozen_loss = [&](const WindowInputs& in) {
      return total_loss_frozen(in, cfg, frozen);
    };

    // Twist components of every non-gauge frame.
    for (size_t i = 1; i < base.poses.size(); ++i) {
      for (int j = 0; j < 6; ++j) {
        Vec6 e = Vec6::Zero();
        e(j) = kFdStep;
        WindowInputs plus = base;
        plus.poses[i] = base.poses[i].perturbed(Twist::from_vector(e));
        WindowInputs minus = base;
        minus.poses[i] = base.poses[i].perturbed(Twist::from_vector(-e));
        const double fd = (frozen_loss(plus) - frozen_loss(minus)) / (2 * kFdStep);
        double rel;
        const bool ok = check_component(grads.pose_grad[i](j), fd, tol, &rel);
        ++summary.total;
        if (ok) ++summary.passed;
        summary.worst_rel_error = std::max(summary.worst_rel_error, rel);
        if (verbose && !ok)
          std::printf("config %d frame %zu twist[%d]: analytic %.6e fd %.6e\n",
                      c, i, j, grads.pose_grad[i](j), fd);
      }
    }

    // Randomly probed log-depth pixels, drawn from each anchor's valid set.
    const int probes_per_anchor = 10;
    for (size_t ai = 0; ai < base.anchors.size(); ++ai) {
      const int frame = base.anchors[ai];
      const auto& fa = frozen.anchors[ai];
      std::vector<std::pair<int, int>> candidates;
      for (int y = 0; y < fa.v.height(); ++y)
        for (int x = 0; x < fa.v.width(); ++x)
          if (fa.v(y, x)) candidates.emplace_back(y, x);
      if (candidates.empty()) continue;
      for (int p = 0; p < probes_per_anchor; ++p) {
        const auto [y, x] = candidates[rng.below(candidates.size())];
        WindowInputs plus = base;
        plus.depths[frame]->data(y, x) *= std::exp(kFdStep);
        WindowInputs minus = base;
        minus.depths[frame]->data(y, x) *= std::exp(-kFdStep);
        const double fd = (frozen_loss(plus) - frozen_loss(minus)) / (2 * kFdStep);
        double rel;
        const bool ok = check_component(grads.logdepth_grad[ai](y, x), fd, tol, &rel);
        ++summary.total;
        if (ok) ++summary.passed;
        summary.worst_rel_error = std::max(summary.worst_rel_error, rel);
        if (verbose && !ok)
          std::printf("config %d anchor %d pixel (%d,%d): analytic %.6e fd %.6e\n",
                      c, frame, y, x, grads.logdepth_grad[ai](y, x), fd);
      }
    }
  }
  return summary;
}

}  // namespace gpa
