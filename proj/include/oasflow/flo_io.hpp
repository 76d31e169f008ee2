#pragma once

#include <cstdio>
#include <fstream>

#include "oasflow/tensor.hpp"

namespace oasflow {
namespace detail {

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32_le(std::string& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32_le(out, v);
}

inline uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline float get_f32_le(const unsigned char* p) {
  const uint32_t v = get_u32_le(p);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Middlebury .flo: float sentinel 202021.25 ("PIEH"), i32 width, i32 height,
// then h*w interleaved (u, v) float pairs, all little-endian.
// ---------------------------------------------------------------------------

inline constexpr float kFloSentinel = 202021.25f;

inline void write_flo(const std::string& path, const Tensor4& flow) {
  if (flow.n != 1 || flow.c != 2)
    throw ShapeError("write_flo: expected (1, 2, h, w) flow, got " + flow.shape_str());
  std::string out;
  out.reserve(12 + static_cast<size_t>(flow.h) * flow.w * 8);
  detail::put_f32_le(out, kFloSentinel);
  detail::put_u32_le(out, static_cast<uint32_t>(flow.w));
  detail::put_u32_le(out, static_cast<uint32_t>(flow.h));
  const float* u = flow.plane(0, 0);
  const float* v = flow.plane(0, 1);
  for (int64_t i = 0; i < static_cast<int64_t>(flow.h) * flow.w; ++i) {
    detail::put_f32_le(out, u[i]);
    detail::put_f32_le(out, v[i]);
  }
  detail::write_file(path, out);
}

inline Tensor4 read_flo(const std::string& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < 12) throw FormatError("read_flo: '" + path + "' truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  const float sentinel = detail::get_f32_le(p);
  if (sentinel != kFloSentinel)
    throw FormatError("read_flo: '" + path + "' bad sentinel (not a .flo file)");
  const int w = static_cast<int>(detail::get_u32_le(p + 4));
  const int h = static_cast<int>(detail::get_u32_le(p + 8));
  if (w <= 0 || h <= 0)
    throw FormatError("read_flo: '" + path + "' invalid dimensions " + std::to_string(w) +
                      "x" + std::to_string(h));
  const size_t expected = 12 + static_cast<size_t>(h) * w * 8;
  if (data.size() != expected)
    throw FormatError("read_flo: '" + path + "' payload length " +
                      std::to_string(data.size()) + " != expected " +
                      std::to_string(expected));
  Tensor4 flow(1, 2, h, w);
  float* u = flow.plane(0, 0);
  float* v = flow.plane(0, 1);
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
    u[i] = detail::get_f32_le(p + 12 + i * 8);
    v[i] = detail::get_f32_le(p + 12 + i * 8 + 4);
  }
  return flow;
}

}  // namespace oasflow
