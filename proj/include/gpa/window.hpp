#pragma once

#include <vector>

#include "gpa/errors.hpp"
#include "gpa/rng.hpp"

namespace gpa {

struct WindowConfig {
  int window_len = 5;      // S
  int stride = 3;
  int num_anchors = 3;     // N
  int temporal_stride = 1; // frame subsampling inside a window
  uint64_t seed = 0;

  void validate() const;
};

/// Ordered frame set of one sliding window plus its anchor subset.
struct Window {
  std::vector<int> frame_ids;  // strictly increasing global indices
  std::vector<int> anchors;    // subset of frame_ids, ascending
};

/// Builds overlapping windows covering [0, seq_len). Windows start at
/// multiples of the stride; a final window is snapped to the sequence end
/// when the stride leaves a remainder, so every frame is covered.
std::vector<Window> make_windows(int seq_len, const WindowConfig& cfg);

/// Draws num_anchors distinct frames uniformly without replacement.
Window sample_anchors(const Window& w, const WindowConfig& cfg, Rng& rng);

}  // namespace gpa
