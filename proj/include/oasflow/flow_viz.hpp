#pragma once

#include "oasflow/tensor.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Optical-flow color coding on the standard 55-bin wheel
// (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6). Hue encodes direction via
// atan2(-v, -u), saturation encodes magnitude; zero flow is white and
// magnitudes beyond max_mag darken to 75%.
// ---------------------------------------------------------------------------

namespace detail {

struct ColorWheel {
  static constexpr int kBins = 15 + 6 + 4 + 11 + 13 + 6;
  int rgb[kBins][3];

  ColorWheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    int k = 0;
    for (int i = 0; i < RY; ++i, ++k) set(k, 255, 255 * i / RY, 0);
    for (int i = 0; i < YG; ++i, ++k) set(k, 255 - 255 * i / YG, 255, 0);
    for (int i = 0; i < GC; ++i, ++k) set(k, 0, 255, 255 * i / GC);
    for (int i = 0; i < CB; ++i, ++k) set(k, 0, 255 - 255 * i / CB, 255);
    for (int i = 0; i < BM; ++i, ++k) set(k, 255 * i / BM, 0, 255);
    for (int i = 0; i < MR; ++i, ++k) set(k, 255, 0, 255 - 255 * i / MR);
  }

  void set(int k, int r, int g, int b) {
    rgb[k][0] = r;
    rgb[k][1] = g;
    rgb[k][2] = b;
  }
};

inline const ColorWheel& color_wheel() {
  static const ColorWheel wheel;
  return wheel;
}

inline void flow_pixel_color(float fx, float fy, uint8_t* out) {
  const auto& wheel = color_wheel();
  const float rad = std::sqrt(fx * fx + fy * fy);
  const float a = std::atan2(-fy, -fx) / 3.14159265358979323846f;
  const float fk = (a + 1.0f) / 2.0f * static_cast<float>(ColorWheel::kBins - 1);
  int k0 = static_cast<int>(fk);
  if (k0 < 0) k0 = 0;
  if (k0 > ColorWheel::kBins - 1) k0 = ColorWheel::kBins - 1;
  const int k1 = (k0 + 1) % ColorWheel::kBins;
  const float f = fk - static_cast<float>(k0);
  for (int b = 0; b < 3; ++b) {
    const float col0 = static_cast<float>(wheel.rgb[k0][b]) / 255.0f;
    const float col1 = static_cast<float>(wheel.rgb[k1][b]) / 255.0f;
    float col = (1.0f - f) * col0 + f * col1;
    if (rad <= 1.0f)
      col = 1.0f - rad * (1.0f - col);  // saturation grows with magnitude
    else
      col *= 0.75f;  // out of range
    out[b] = static_cast<uint8_t>(255.0f * col + 0.5f);
  }
}

}  // namespace detail

/// 99th-percentile flow magnitude, the default normalization.
inline float flow_percentile_magnitude(const Tensor4& flow, double percentile = 0.99) {
  std::vector<float> mags;
  mags.reserve(static_cast<size_t>(flow.h) * flow.w);
  const float* u = flow.plane(0, 0);
  const float* v = flow.plane(0, 1);
  for (int64_t i = 0; i < static_cast<int64_t>(flow.h) * flow.w; ++i)
    mags.push_back(std::sqrt(u[i] * u[i] + v[i] * v[i]));
  const size_t k =
      std::min(mags.size() - 1, static_cast<size_t>(percentile * (mags.size() - 1) + 0.5));
  std::nth_element(mags.begin(), mags.begin() + k, mags.end());
  return mags[k];
}

inline std::vector<uint8_t> flow_to_color(const Tensor4& flow, float max_mag = 0.0f) {
  if (flow.n != 1 || flow.c != 2)
    throw ShapeError("flow_to_color: expected (1, 2, h, w) flow, got " + flow.shape_str());
  if (max_mag <= 0.0f) max_mag = flow_percentile_magnitude(flow);
  if (max_mag <= 0.0f) max_mag = 1.0f;  // all-zero flow
  std::vector<uint8_t> rgb(static_cast<size_t>(flow.h) * flow.w * 3);
  const float* u = flow.plane(0, 0);
  const float* v = flow.plane(0, 1);
  const float inv = 1.0f / max_mag;
  for (int64_t i = 0; i < static_cast<int64_t>(flow.h) * flow.w; ++i)
    detail::flow_pixel_color(u[i] * inv, v[i] * inv, rgb.data() + i * 3);
  return rgb;
}

}  // namespace oasflow
