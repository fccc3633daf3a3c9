#include "gpa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace gpa {

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
  return tail == suffix;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Image load_png_file(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw ParseError(path + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": PNG decode error");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": unsupported channel count after expansion");
  }

  std::vector<png_byte> row(static_cast<size_t>(w) * channels);
  Image img(h, w, channels);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = row[static_cast<size_t>(x) * channels + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Image load_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw ParseError(path + ": not a PGM file");

  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      if (!(in >> tok)) throw ParseError(path + ": truncated PGM header");
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw ParseError(path + ": unsupported PGM geometry or depth");

  Image img(h, w, 1);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<uint8_t> buf(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw ParseError(path + ": truncated PGM payload");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(y, x) = buf[static_cast<size_t>(y) * w + x] / static_cast<double>(maxval);
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int v;
        if (!(in >> v)) throw ParseError(path + ": truncated PGM payload");
        img.at(y, x) = v / static_cast<double>(maxval);
      }
  }
  return img;
}

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(p[i])) << (8 * i);
  return v;
}

void save_depth_impl(const std::string& path, const Grid<double>& depth, bool f64) {
  std::string out;
  out.reserve(16 + depth.size() * (f64 ? 8 : 4));
  out += f64 ? "GPA_DEPD" : "GPA_DEPF";
  put_u32(out, static_cast<uint32_t>(depth.height()));
  put_u32(out, static_cast<uint32_t>(depth.width()));
  for (size_t i = 0; i < depth.size(); ++i) {
    if (f64) {
      double v = depth.data()[i];
      char b[8];
      std::memcpy(b, &v, 8);
      out.append(b, 8);
    } else {
      float v = static_cast<float>(depth.data()[i]);
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  }
  atomic_write(path, out);
}

}  // namespace

Image load_image(const std::string& path, bool force_gray) {
  Image img;
  if (has_suffix(path, ".pgm"))
    img = load_pgm_file(path);
  else if (has_suffix(path, ".png"))
    img = load_png_file(path);
  else
    throw InvalidArgument("load_image: unsupported extension on " + path);
  return force_gray ? grayscale(img) : img;
}

void save_png(const std::string& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": PNG encode error");
  }
  png_init_io(png, fp.get());
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width(), img.height(), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<size_t>(x) * img.channels() + c] = to_byte(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pgm(const std::string& path, const Image& img) {
  if (img.channels() != 1)
    throw InvalidArgument("save_pgm: single-channel images only");
  std::string out = "P5\n" + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.push_back(static_cast<char>(to_byte(img.at(y, x))));
  atomic_write(path, out);
}

Grid<double> load_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char header[16];
  in.read(header, 16);
  if (!in) throw ParseError(path + ": truncated depth header");
  bool f64;
  if (std::memcmp(header, "GPA_DEPF", 8) == 0)
    f64 = false;
  else if (std::memcmp(header, "GPA_DEPD", 8) == 0)
    f64 = true;
  else
    throw ParseError(path + ": bad depth magic");
  const uint32_t h = get_u32(header + 8);
  const uint32_t w = get_u32(header + 12);
  if (h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20)
    throw ParseError(path + ": implausible depth dimensions");
  Grid<double> out(static_cast<int>(h), static_cast<int>(w), 0.0);
  const size_t n = out.size();
  if (f64) {
    std::vector<double> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
    if (!in) throw ParseError(path + ": truncated depth payload");
    std::copy(buf.begin(), buf.end(), out.data());
  } else {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
    if (!in) throw ParseError(path + ": truncated depth payload");
    std::copy(buf.begin(), buf.end(), out.data());
  }
  return out;
}

void save_depth_f32(const std::string& path, const Grid<double>& depth) {
  save_depth_impl(path, depth, false);
}

void save_depth_f64(const std::string& path, const Grid<double>& depth) {
  save_depth_impl(path, depth, true);
}

Image resize_bilinear(const Image& img, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1)
    throw InvalidArgument("resize_bilinear: dimensions must be >= 1");
  Image out(new_h, new_w, img.channels());
  const double sx = static_cast<double>(img.width()) / new_w;
  const double sy = static_cast<double>(img.height()) / new_h;
  for (int y = 0; y < new_h; ++y) {
    // Align pixel centers of the two grids.
    const double v = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < new_w; ++x) {
      const double u = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels(); ++c)
        out.at(y, x, c) = bilinear_sample_clamped(img, u, v, c);
    }
  }
  return out;
}

void atomic_write(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace gpa
