// Independent brute-force oracles. These deliberately avoid the library's
// kernel paths: plain nested loops over the defining formulas.
#pragma once

#include <cmath>

#include "oasflow/tensor.hpp"

namespace oracles {

using oasflow::Tensor4;

// Seven nested loops straight from the cross-correlation definition.
inline Tensor4 conv2d_naive(const Tensor4& x, const Tensor4& w, const Tensor4& b, int stride,
                            int pad) {
  const int oh = (x.h + 2 * pad - w.h) / stride + 1;
  const int ow = (x.w + 2 * pad - w.w) / stride + 1;
  Tensor4 out(x.n, w.n, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int oc = 0; oc < w.n; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.data[oc];
          for (int ic = 0; ic < x.c; ++ic)
            for (int ky = 0; ky < w.h; ++ky)
              for (int kx = 0; kx < w.w; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += static_cast<double>(x.at(n, ic, iy, ix)) *
                       static_cast<double>(w.at(oc, ic, ky, kx));
              }
          out.at(n, oc, oy, ox) = static_cast<float>(acc);
        }
  return out;
}

// Zero-padded bilinear read at one (x, y), double precision.
inline double bilinear_read(const Tensor4& t, int n, int c, double x, double y) {
  const double xf = std::floor(x), yf = std::floor(y);
  const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
  const double fx = x - xf, fy = y - yf;
  auto read = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= t.w || yy < 0 || yy >= t.h) return 0.0;
    return static_cast<double>(t.at(n, c, yy, xx));
  };
  return (1.0 - fy) * ((1.0 - fx) * read(y0, x0) + fx * read(y0, x0 + 1)) +
         fy * ((1.0 - fx) * read(y0 + 1, x0) + fx * read(y0 + 1, x0 + 1));
}

// Direct coordinate-mapping oracle for the 2x upsample (clamped borders).
inline Tensor4 upsample2x_naive(const Tensor4& x, float value_scale) {
  Tensor4 out(x.n, x.c, 2 * x.h, 2 * x.w);
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          const double sy = (oy + 0.5) / 2.0 - 0.5;
          const double sx = (ox + 0.5) / 2.0 - 0.5;
          const int y0 = static_cast<int>(std::floor(sy));
          const int x0 = static_cast<int>(std::floor(sx));
          const double fy = sy - y0, fx = sx - x0;
          auto read = [&](int yy, int xx) {
            return static_cast<double>(x.at(n, c, clampi(yy, x.h - 1), clampi(xx, x.w - 1)));
          };
          const double v = (1.0 - fy) * ((1.0 - fx) * read(y0, x0) + fx * read(y0, x0 + 1)) +
                           fy * ((1.0 - fx) * read(y0 + 1, x0) + fx * read(y0 + 1, x0 + 1));
          out.at(n, c, oy, ox) = static_cast<float>(v * value_scale);
        }
  return out;
}

// Eq. 1 evaluated literally: warp the target with the flow, then inner
// products against integer-shifted warped features (zero padded).
inline Tensor4 cost_volume_warping_naive(const Tensor4& f1, const Tensor4& f2,
                                         const Tensor4& flow, int radius, bool normalize) {
  const int win = 2 * radius + 1;
  Tensor4 warped(f1.n, f1.c, f1.h, f1.w);
  for (int n = 0; n < f1.n; ++n)
    for (int c = 0; c < f1.c; ++c)
      for (int y = 0; y < f1.h; ++y)
        for (int x = 0; x < f1.w; ++x)
          warped.at(n, c, y, x) = static_cast<float>(bilinear_read(
              f2, n, c, x + static_cast<double>(flow.at(n, 0, y, x)),
              y + static_cast<double>(flow.at(n, 1, y, x))));
  Tensor4 out(f1.n, win * win, f1.h, f1.w);
  for (int n = 0; n < f1.n; ++n)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const int ch = (dy + radius) * win + (dx + radius);
        for (int y = 0; y < f1.h; ++y)
          for (int x = 0; x < f1.w; ++x) {
            const int ty = y + dy, tx = x + dx;
            double acc = 0.0;
            if (ty >= 0 && ty < f1.h && tx >= 0 && tx < f1.w)
              for (int c = 0; c < f1.c; ++c)
                acc += static_cast<double>(f1.at(n, c, y, x)) *
                       static_cast<double>(warped.at(n, c, ty, tx));
            out.at(n, ch, y, x) =
                static_cast<float>(normalize ? acc / static_cast<double>(f1.c) : acc);
          }
      }
  return out;
}

// Eq. 2 evaluated literally: one bilinear sample of f2 per (x, d).
inline Tensor4 cost_volume_sampling_naive(const Tensor4& f1, const Tensor4& f2,
                                          const Tensor4& flow, int radius, bool normalize) {
  const int win = 2 * radius + 1;
  Tensor4 out(f1.n, win * win, f1.h, f1.w);
  for (int n = 0; n < f1.n; ++n)
    for (int y = 0; y < f1.h; ++y)
      for (int x = 0; x < f1.w; ++x)
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int ch = (dy + radius) * win + (dx + radius);
            double acc = 0.0;
            for (int c = 0; c < f1.c; ++c)
              acc += static_cast<double>(f1.at(n, c, y, x)) *
                     bilinear_read(f2, n, c,
                                   x + static_cast<double>(flow.at(n, 0, y, x)) + dx,
                                   y + static_cast<double>(flow.at(n, 1, y, x)) + dy);
            out.at(n, ch, y, x) =
                static_cast<float>(normalize ? acc / static_cast<double>(f1.c) : acc);
          }
  return out;
}

// The four occlusion-fusion steps, term by term.
inline Tensor4 occlusion_aware_naive(const Tensor4& cost, const Tensor4& occ,
                                     const Tensor4& w1, const Tensor4& b1, const Tensor4& w2,
                                     const Tensor4& b2, float slope) {
  Tensor4 rev(occ.n, 1, occ.h, occ.w);
  for (int64_t i = 0; i < occ.numel(); ++i) rev.data[i] = 1.0f - occ.data[i];
  Tensor4 branch1 = Tensor4::zeros_like(cost);
  Tensor4 branch2 = Tensor4::zeros_like(cost);
  for (int n = 0; n < cost.n; ++n)
    for (int c = 0; c < cost.c; ++c)
      for (int y = 0; y < cost.h; ++y)
        for (int x = 0; x < cost.w; ++x) {
          branch1.at(n, c, y, x) = cost.at(n, c, y, x) * occ.at(n, 0, y, x);
          branch2.at(n, c, y, x) = cost.at(n, c, y, x) * rev.at(n, 0, y, x);
        }
  const Tensor4 f1 = conv2d_naive(branch1, w1, b1, 1, 1);
  const Tensor4 f2 = conv2d_naive(branch2, w2, b2, 1, 1);
  Tensor4 out = Tensor4::zeros_like(f1);
  for (int64_t i = 0; i < f1.numel(); ++i) {
    const float s = f1.data[i] + f2.data[i];
    out.data[i] = s >= 0.0f ? s : slope * s;
  }
  return out;
}

// Loop oracle for the multi-scale term: sum over pixels of per-pixel norms.
inline double l2_norm_sum_naive(const Tensor4& pred, const Tensor4& gt) {
  double total = 0.0;
  for (int n = 0; n < pred.n; ++n)
    for (int y = 0; y < pred.h; ++y)
      for (int x = 0; x < pred.w; ++x) {
        double sq = 0.0;
        for (int c = 0; c < pred.c; ++c) {
          const double d = static_cast<double>(pred.at(n, c, y, x)) -
                           static_cast<double>(gt.at(n, c, y, x));
          sq += d * d;
        }
        total += std::sqrt(sq);
      }
  return total;
}

inline double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace oracles
