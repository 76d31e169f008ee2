#pragma once

#include "oasflow/flo_io.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Binary PPM (P6), maxval <= 255. Images map to (1, 3, h, w) tensors in [0, 1].
// ---------------------------------------------------------------------------

namespace detail {

inline void skip_ppm_space(const std::string& data, size_t& pos) {
  while (pos < data.size()) {
    const char c = data[pos];
    if (c == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++pos;
    } else {
      return;
    }
  }
}

inline int parse_ppm_int(const std::string& data, size_t& pos, const char* what) {
  skip_ppm_space(data, pos);
  int v = 0;
  bool any = false;
  while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
    v = v * 10 + (data[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) throw FormatError(std::string("read_ppm: missing ") + what);
  return v;
}

}  // namespace detail

inline Tensor4 read_ppm(const std::string& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6')
    throw FormatError("read_ppm: '" + path + "' is not a binary PPM (P6)");
  size_t pos = 2;
  const int w = detail::parse_ppm_int(data, pos, "width");
  const int h = detail::parse_ppm_int(data, pos, "height");
  const int maxval = detail::parse_ppm_int(data, pos, "maxval");
  if (w <= 0 || h <= 0)
    throw FormatError("read_ppm: '" + path + "' invalid dimensions");
  if (maxval <= 0 || maxval > 255)
    throw FormatError("read_ppm: '" + path + "' unsupported maxval " + std::to_string(maxval));
  ++pos;  // single whitespace after maxval
  const size_t expected = static_cast<size_t>(w) * h * 3;
  if (data.size() - pos != expected)
    throw FormatError("read_ppm: '" + path + "' payload length " +
                      std::to_string(data.size() - pos) + " != expected " +
                      std::to_string(expected));
  Tensor4 im(1, 3, h, w);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  const float inv = 1.0f / static_cast<float>(maxval);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        im.at(0, c, y, x) = static_cast<float>(p[(static_cast<size_t>(y) * w + x) * 3 + c]) * inv;
  return im;
}

inline void write_ppm(const std::string& path, const Tensor4& im) {
  if (im.n != 1 || im.c != 3)
    throw ShapeError("write_ppm: expected (1, 3, h, w) image, got " + im.shape_str());
  std::string out = "P6\n" + std::to_string(im.w) + " " + std::to_string(im.h) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(im.h) * im.w * 3);
  for (int y = 0; y < im.h; ++y) {
    for (int x = 0; x < im.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = im.at(0, c, y, x) * 255.0f + 0.5f;
        if (v < 0.0f) v = 0.0f;
        if (v > 255.0f) v = 255.0f;
        out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      }
    }
  }
  detail::write_file(path, out);
}

/// Writes raw RGB bytes (h*w*3) as PPM.
inline void write_ppm_rgb(const std::string& path, const std::vector<uint8_t>& rgb, int h,
                          int w) {
  if (rgb.size() != static_cast<size_t>(h) * w * 3)
    throw ShapeError("write_ppm_rgb: buffer size " + std::to_string(rgb.size()) +
                     " != " + std::to_string(static_cast<size_t>(h) * w * 3));
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  detail::write_file(path, out);
}

}  // namespace oasflow
