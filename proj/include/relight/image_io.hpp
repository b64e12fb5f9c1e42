#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relight/frame.hpp"

namespace relight {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint8_t quantize8(double v) {
  const double q = std::round(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

// ---- PNG (8-bit gray or RGB) ----

inline Frame load_png(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(
      std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw IoError("not a PNG file: " + path);
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int c = static_cast<int>(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported channel count in " + path);
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * c);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * c;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Frame f(w, h, c);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    f.data[i] = bytes[i] / 255.0;
  }
  return f;
}

inline void save_png(const Frame& f, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::unique_ptr<std::FILE, detail::FileCloser> fp(
        std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("PNG encode error for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, f.width, f.height, 8,
                 f.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(f.width) *
                                  f.channels);
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        for (int c = 0; c < f.channels; ++c) {
          row[static_cast<std::size_t>(x) * f.channels + c] =
              detail::quantize8(f.at(y, x, c));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

// ---- binary PGM (P5) / PPM (P6), 8-bit ----

inline Frame load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") {
    throw IoError("unsupported PNM magic in " + path);
  }
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw IoError("truncated PNM header in " + path);
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path);
  in.get();  // single whitespace after maxval
  const int c = magic == "P5" ? 1 : 3;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PNM data in " + path);
  Frame f(w, h, c);
  for (std::size_t i = 0; i < bytes.size(); ++i) f.data[i] = bytes[i] / 255.0;
  return f;
}

inline void save_pnm(const Frame& f, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << (f.channels == 1 ? "P5" : "P6") << "\n"
        << f.width << " " << f.height << "\n255\n";
    for (double v : f.data) out.put(static_cast<char>(detail::quantize8(v)));
  }
  std::filesystem::rename(tmp, path);
}

// ---- PFM (32-bit float, grayscale Pf / RGB PF, little-endian) ----
// Used by the CLI's --float mode so enhanced frames survive a disk round
// trip without 8-bit quantization.

inline Frame load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if ((magic != "Pf" && magic != "PF") || scale >= 0.0) {
    throw IoError("unsupported PFM header in " + path);
  }
  in.get();
  const int c = magic == "Pf" ? 1 : 3;
  std::vector<float> vals(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(vals.data()),
          static_cast<std::streamsize>(vals.size() * sizeof(float)));
  if (!in) throw IoError("truncated PFM data in " + path);
  Frame f(w, h, c);
  // PFM rows run bottom-to-top.
  for (int y = 0; y < h; ++y) {
    const std::size_t src = static_cast<std::size_t>(h - 1 - y) * w * c;
    for (int i = 0; i < w * c; ++i) {
      f.data[static_cast<std::size_t>(y) * w * c + i] =
          static_cast<double>(vals[src + i]);
    }
  }
  return f;
}

inline void save_pfm(const Frame& f, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << (f.channels == 1 ? "Pf" : "PF") << "\n"
        << f.width << " " << f.height << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(f.width) * f.channels);
    for (int y = f.height - 1; y >= 0; --y) {
      for (int i = 0; i < f.width * f.channels; ++i) {
        row[i] = static_cast<float>(
            f.data[static_cast<std::size_t>(y) * f.width * f.channels + i]);
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  std::filesystem::rename(tmp, path);
}

inline Frame load_frame(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  Frame f;
  if (ext == ".png") {
    f = load_png(path);
  } else if (ext == ".pgm" || ext == ".ppm") {
    f = load_pnm(path);
  } else if (ext == ".pfm") {
    f = load_pfm(path);
  } else {
    throw IoError("unsupported image extension: " + path);
  }
  f.validate();
  return f;
}

inline void save_frame(const Frame& f, const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".png") {
    save_png(f, path);
  } else if (ext == ".pgm" || ext == ".ppm") {
    save_pnm(f, path);
  } else if (ext == ".pfm") {
    save_pfm(f, path);
  } else {
    throw IoError("unsupported image extension: " + path);
  }
}

namespace detail {

// Splits a printf-style template with exactly one %0<N>d field.
struct FilePattern {
  std::string prefix;
  std::string suffix;
  int width = 0;

  static FilePattern parse(const std::string& pattern) {
    const auto pos = pattern.find('%');
    if (pos == std::string::npos) {
      throw IoError("filename template needs one %...d field: " + pattern);
    }
    FilePattern p;
    p.prefix = pattern.substr(0, pos);
    std::size_t i = pos + 1;
    std::string digits;
    while (i < pattern.size() && std::isdigit(pattern[i])) digits += pattern[i++];
    if (i >= pattern.size() || pattern[i] != 'd') {
      throw IoError("filename template needs one %...d field: " + pattern);
    }
    p.width = digits.empty() ? 0 : std::stoi(digits);
    p.suffix = pattern.substr(i + 1);
    return p;
  }

  std::string format(int index) const {
    std::string num = std::to_string(index);
    while (static_cast<int>(num.size()) < width) num.insert(num.begin(), '0');
    return prefix + num + suffix;
  }

  // Returns the frame index, or -1 when the name does not match.
  int match(const std::string& name) const {
    if (name.size() <= prefix.size() + suffix.size()) return -1;
    if (name.compare(0, prefix.size(), prefix) != 0) return -1;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      return -1;
    }
    const std::string mid =
        name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (mid.empty()) return -1;
    for (char ch : mid) {
      if (!std::isdigit(static_cast<unsigned char>(ch))) return -1;
    }
    return std::stoi(mid);
  }
};

}  // namespace detail

// Loads frames matching `pattern` (default frame_%06d.png) with contiguous
// indices starting at 0. A hole in the index range is an error.
inline Sequence load_sequence(const std::string& dir_path,
                              const std::string& pattern = "frame_%06d.png",
                              double fps = 18.0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir_path)) {
    throw IoError("not a directory: " + dir_path);
  }
  const auto pat = detail::FilePattern::parse(pattern);
  int max_index = -1;
  for (const auto& entry : fs::directory_iterator(dir_path)) {
    if (!entry.is_regular_file()) continue;
    const int idx = pat.match(entry.path().filename().string());
    if (idx >= 0) max_index = std::max(max_index, idx);
  }
  if (max_index < 0) {
    throw IoError("no frames matching " + pattern + " in " + dir_path);
  }
  Sequence seq;
  seq.fps = fps;
  seq.frames.reserve(static_cast<std::size_t>(max_index) + 1);
  for (int i = 0; i <= max_index; ++i) {
    const fs::path p = fs::path(dir_path) / pat.format(i);
    if (!fs::exists(p)) {
      throw IoError("frame index gap: missing index " + std::to_string(i) +
                    " (" + p.string() + ")");
    }
    Frame f = load_frame(p.string());
    f.index = i;
    if (!seq.frames.empty() && !f.same_shape(seq.frames.front())) {
      throw IoError("dimension mismatch at frame " + std::to_string(i));
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

inline void save_sequence(const Sequence& seq, const std::string& dir_path,
                          const std::string& pattern = "frame_%06d.png") {
  namespace fs = std::filesystem;
  fs::create_directories(dir_path);
  const auto pat = detail::FilePattern::parse(pattern);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    save_frame(seq.frames[i],
               (fs::path(dir_path) / pat.format(static_cast<int>(i))).string());
  }
}

}  // namespace relight
