#pragma once

// Minimal 8-bit PGM codec (binary P5 read/write, ASCII P2 read).

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "tfp/error.hpp"
#include "tfp/grid.hpp"

namespace tfp::pgm {

namespace detail {

inline void skip_space_and_comments(std::istream& is) {
  while (true) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c != EOF && std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

inline long read_header_int(std::istream& is, const char* what) {
  skip_space_and_comments(is);
  long v = -1;
  if (!(is >> v) || v < 0) throw InputError(std::string("PGM: bad ") + what);
  return v;
}

}  // namespace detail

inline Grid<std::uint8_t> read(std::istream& is) {
  char magic[2] = {0, 0};
  if (!is.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2'))
    throw InputError("PGM: missing P5/P2 magic number");
  const long cols = detail::read_header_int(is, "width");
  const long rows = detail::read_header_int(is, "height");
  const long maxval = detail::read_header_int(is, "maxval");
  if (cols < 1 || rows < 1) throw InputError("PGM: empty image");
  if (maxval < 1 || maxval > 255) throw InputError("PGM: only 8-bit images are supported");
  Grid<std::uint8_t> img(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  auto scale = [&](long v) {
    return static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  };
  if (magic[1] == '5') {
    is.get();  // single whitespace after maxval
    is.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (static_cast<std::size_t>(is.gcount()) != img.size()) throw InputError("PGM: truncated pixel data");
    if (maxval != 255)
      for (auto& v : img) v = scale(std::min<long>(v, maxval));
  } else {
    for (auto& v : img) {
      long x = 0;
      if (!(is >> x) || x < 0 || x > maxval) throw InputError("PGM: bad ASCII pixel value");
      v = scale(x);
    }
  }
  return img;
}

inline Grid<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return read(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write(std::ostream& os, const Grid<std::uint8_t>& img) {
  os << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

inline void write_file(const std::filesystem::path& path, const Grid<std::uint8_t>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write(out, img);
  if (!out) throw InputError("write failed for " + path.string());
}

// Binary mask as 0/255 image.
inline void write_mask(const std::filesystem::path& path, const MotionMask& mask) {
  Grid<std::uint8_t> img(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = mask.mask.data()[i] ? 255 : 0;
  write_file(path, img);
}

inline MotionMask read_mask(const std::filesystem::path& path, std::size_t frame_index) {
  Grid<std::uint8_t> img = read_file(path);
  for (auto& v : img) v = v >= 128 ? 1 : 0;
  return {std::move(img), frame_index};
}

}  // namespace tfp::pgm
