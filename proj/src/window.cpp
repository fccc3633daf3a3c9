#include "gpa/window.hpp"

#include <algorithm>

namespace gpa {

void WindowConfig::validate() const {
  if (window_len < 2) throw InvalidArgument("WindowConfig: window_len must be >= 2");
  if (num_anchors < 1 || num_anchors > window_len)
    throw InvalidArgument("WindowConfig: num_anchors must be in [1, window_len]");
  if (stride < 1) throw InvalidArgument("WindowConfig: stride must be >= 1");
  if (temporal_stride < 1)
    throw InvalidArgument("WindowConfig: temporal_stride must be >= 1");
}

std::vector<Window> make_windows(int seq_len, const WindowConfig& cfg) {
  cfg.validate();
  if (seq_len < cfg.window_len * cfg.temporal_stride)
    throw InvalidArgument("make_windows: sequence shorter than one window");

  const int span = (cfg.window_len - 1) * cfg.temporal_stride + 1;
  const int last_start = seq_len - span;
  std::vector<Window> out;
  auto push = [&](int start) {
    Window w;
    for (int j = 0; j < cfg.window_len; ++j)
      w.frame_ids.push_back(start + j * cfg.temporal_stride);
    out.push_back(std::move(w));
  };
  for (int start = 0; start <= last_start; start += cfg.stride) push(start);
  if (out.back().frame_ids.front() < last_start)
    push(last_start);  // snap the final window to the sequence end
  return out;
}

Window sample_anchors(const Window& w, const WindowConfig& cfg, Rng& rng) {
  const int s = static_cast<int>(w.frame_ids.size());
  if (cfg.num_anchors > s)
    throw InvalidArgument("sample_anchors: more anchors than frames");

  // Partial Fisher-Yates over frame positions.
  std::vector<int> idx(s);
  for (int i = 0; i < s; ++i) idx[i] = i;
  for (int i = 0; i < cfg.num_anchors; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(s - i)));
    std::swap(idx[i], idx[j]);
  }
  Window out = w;
  out.anchors.clear();
  for (int i = 0; i < cfg.num_anchors; ++i)
    out.anchors.push_back(w.frame_ids[idx[i]]);
  std::sort(out.anchors.begin(), out.anchors.end());
  return out;
}

}  // namespace gpa
