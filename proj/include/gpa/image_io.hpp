#pragma once

#include <string>

#include "gpa/grid.hpp"
#include "gpa/image.hpp"

namespace gpa {

/// Loads an 8-bit PNG or PGM, normalized to [0,1] by /255.
/// Color inputs come back with C=3 unless force_gray is set.
Image load_image(const std::string& path, bool force_gray = false);

/// Writes an 8-bit PNG (C=1 gray, C=3 RGB); values clamped to [0,1].
void save_png(const std::string& path, const Image& img);

/// Writes a binary (P5) PGM from a single-channel image.
void save_pgm(const std::string& path, const Image& img);

/// Float depth container: 16-byte header (8-byte magic, u32 height,
/// u32 width, little endian) followed by row-major samples.
/// "GPA_DEPF" stores float32 (frame export), "GPA_DEPD" float64 (state files).
Grid<double> load_depth(const std::string& path);
void save_depth_f32(const std::string& path, const Grid<double>& depth);
void save_depth_f64(const std::string& path, const Grid<double>& depth);

/// Bilinear resize to new_w x new_h (channel-wise).
Image resize_bilinear(const Image& img, int new_w, int new_h);

/// Writes bytes to a temp file in the target directory, then renames.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace gpa
