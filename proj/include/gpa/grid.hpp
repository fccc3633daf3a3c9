#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace gpa {

/// Dense row-major H x W buffer. Indexed as (row y, column x).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<size_t>(height) * static_cast<size_t>(width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  T& operator()(int y, int x) {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  const T& operator()(int y, int x) const {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(int h, int w) const { return height_ == h && width_ == w; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return same_shape(other.height(), other.width());
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<uint8_t>;

}  // namespace gpa
