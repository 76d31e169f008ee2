#pragma once

#include <cmath>
#include <limits>

#include "oasflow/tape.hpp"

namespace oasflow {
namespace detail {

// Fixed-order dot product: four strided 64-bit accumulators combined as
// (s0+s1)+(s2+s3). The lane pattern is the defined reduction order and is
// identical for every thread count.
inline float dot_f64(const float* a, const float* b, int64_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int64_t i = 0;
  for (; i + 4 <= len; i += 4) {
    s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
    s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
    s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
  }
  for (; i < len; ++i) s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<float>((s0 + s1) + (s2 + s3));
}

// Shared bilinear machinery. Every sampling path (bilinear_sample, warp, both
// cost volumes) goes through make_bilinear_coeff + bilerp, so fused kernels
// are bit-identical to the naive per-coordinate route.
struct BilinearCoeff {
  int x0, y0;
  float fx, fy;
  float w00, w01, w10, w11;
};

inline BilinearCoeff make_bilinear_coeff(float x, float y) {
  BilinearCoeff b;
  const float xf = std::floor(x);
  const float yf = std::floor(y);
  b.x0 = static_cast<int>(xf);
  b.y0 = static_cast<int>(yf);
  b.fx = x - xf;
  b.fy = y - yf;
  b.w00 = (1.0f - b.fy) * (1.0f - b.fx);
  b.w01 = (1.0f - b.fy) * b.fx;
  b.w10 = b.fy * (1.0f - b.fx);
  b.w11 = b.fy * b.fx;
  return b;
}

inline float bilerp(const BilinearCoeff& b, float v00, float v01, float v10, float v11) {
  return b.w00 * v00 + b.w01 * v01 + b.w10 * v10 + b.w11 * v11;
}

// Corner reads with zero padding, support shifted by integer (dx, dy).
struct CornerReads {
  float v00, v01, v10, v11;
};

inline CornerReads read_corners(const float* plane, int W, int H, const BilinearCoeff& b,
                                int dx, int dy) {
  const int x0 = b.x0 + dx, y0 = b.y0 + dy;
  const int x1 = x0 + 1, y1 = y0 + 1;
  const bool ix0 = (x0 >= 0 && x0 < W), ix1 = (x1 >= 0 && x1 < W);
  const bool iy0 = (y0 >= 0 && y0 < H), iy1 = (y1 >= 0 && y1 < H);
  CornerReads r;
  r.v00 = (iy0 && ix0) ? plane[static_cast<int64_t>(y0) * W + x0] : 0.0f;
  r.v01 = (iy0 && ix1) ? plane[static_cast<int64_t>(y0) * W + x1] : 0.0f;
  r.v10 = (iy1 && ix0) ? plane[static_cast<int64_t>(y1) * W + x0] : 0.0f;
  r.v11 = (iy1 && ix1) ? plane[static_cast<int64_t>(y1) * W + x1] : 0.0f;
  return r;
}

inline float sample_plane(const float* plane, int W, int H, const BilinearCoeff& b, int dx,
                          int dy) {
  const CornerReads r = read_corners(plane, W, H, b, dx, dy);
  return bilerp(b, r.v00, r.v01, r.v10, r.v11);
}

inline void scatter_corner(float* plane, int W, int H, int x, int y, float v) {
  if (x >= 0 && x < W && y >= 0 && y < H) plane[static_cast<int64_t>(y) * W + x] += v;
}

inline void scatter_bilinear(float* plane, int W, int H, const BilinearCoeff& b, int dx,
                             int dy, float g) {
  const int x0 = b.x0 + dx, y0 = b.y0 + dy;
  scatter_corner(plane, W, H, x0, y0, b.w00 * g);
  scatter_corner(plane, W, H, x0 + 1, y0, b.w01 * g);
  scatter_corner(plane, W, H, x0, y0 + 1, b.w10 * g);
  scatter_corner(plane, W, H, x0 + 1, y0 + 1, b.w11 * g);
}

// d(bilerp)/dx and d(bilerp)/dy with zero-padded corner reads.
inline float bilerp_ddx(const BilinearCoeff& b, const CornerReads& r) {
  return (1.0f - b.fy) * (r.v01 - r.v00) + b.fy * (r.v11 - r.v10);
}
inline float bilerp_ddy(const BilinearCoeff& b, const CornerReads& r) {
  return (1.0f - b.fx) * (r.v10 - r.v00) + b.fx * (r.v11 - r.v01);
}

inline int conv_out_dim(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

// im2col for one output row: patch[ox][ic*kh*kw], zero padded.
inline void build_patch_row(const Tensor4& src, int in, int oy, int ow, int kh, int kw,
                            int stride, int pad, float* dst) {
  const int ic = src.c;
  const int64_t patch_len = static_cast<int64_t>(ic) * kh * kw;
  for (int ox = 0; ox < ow; ++ox) {
    float* p = dst + ox * patch_len;
    const int iy0 = oy * stride - pad;
    const int ix0 = ox * stride - pad;
    for (int c = 0; c < ic; ++c) {
      const float* plane = src.plane(in, c);
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = iy0 + ky;
        if (iy < 0 || iy >= src.h) {
          for (int kx = 0; kx < kw; ++kx) *p++ = 0.0f;
          continue;
        }
        const float* row = plane + static_cast<int64_t>(iy) * src.w;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ix0 + kx;
          *p++ = (ix >= 0 && ix < src.w) ? row[ix] : 0.0f;
        }
      }
    }
  }
}

// Elementwise helper: out[i] = f(a[i]) with a registered adjoint df(x, g).
template <typename FwdFn>
inline Tensor4 map_elementwise(const Tensor4& a, FwdFn f) {
  Tensor4 out = Tensor4::zeros_like(a);
  const float* src = a.data.data();
  float* dst = out.data.data();
  parallel_for(a.numel(), [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) dst[i] = f(src[i]);
  });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d — cross-correlation, zero padding, stride 1 or 2.
// weight [out_c, in_c, kh, kw]; bias stored as (1, out_c, 1, 1).
// ---------------------------------------------------------------------------

inline Tape::Id conv2d(Tape& tape, Tape::Id input, Param& weight, Param& bias, int stride,
                       int pad) {
  const Tape::Id wid = tape.param(weight);
  const Tape::Id bid = tape.param(bias);
  const Tensor4& x = tape.value(input);
  const Tensor4& w = tape.value(wid);
  const Tensor4& b = tape.value(bid);
  if (x.c != w.c)
    throw ShapeError("conv2d: input channels " + std::to_string(x.c) + " != weight in_c " +
                     std::to_string(w.c) + " (axis c)");
  if (b.numel() != w.n)
    throw ShapeError("conv2d: bias length " + std::to_string(b.numel()) + " != out_c " +
                     std::to_string(w.n) + " (axis c)");
  if (stride != 1 && stride != 2)
    throw ContractError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
  const int oh = detail::conv_out_dim(x.h, pad, w.h, stride);
  const int ow = detail::conv_out_dim(x.w, pad, w.w, stride);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: kernel " + std::to_string(w.h) + "x" + std::to_string(w.w) +
                     " does not fit input " + x.shape_str() + " (axis h/w)");

  const int oc = w.n, ic = x.c, kh = w.h, kw = w.w, n = x.n;
  const int64_t patch_len = static_cast<int64_t>(ic) * kh * kw;
  Tensor4 out(n, oc, oh, ow);

  parallel_for(static_cast<int64_t>(n) * oh, [&](int64_t begin, int64_t end) {
    std::vector<float> patch(static_cast<size_t>(ow) * patch_len);
    for (int64_t row = begin; row < end; ++row) {
      const int in = static_cast<int>(row / oh);
      const int oy = static_cast<int>(row % oh);
      detail::build_patch_row(x, in, oy, ow, kh, kw, stride, pad, patch.data());
      for (int c = 0; c < oc; ++c) {
        const float* wrow = w.data.data() + static_cast<int64_t>(c) * patch_len;
        const double bv = static_cast<double>(b.data[c]);
        float* orow = out.plane(in, c) + static_cast<int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const float dot = detail::dot_f64(patch.data() + ox * patch_len, wrow, patch_len);
          orow[ox] = static_cast<float>(static_cast<double>(dot) + bv);
        }
      }
    }
  });

  return tape.emit(std::move(out), [input, wid, bid, stride, pad](Tape& t, Tape::Id self) {
    const Tensor4& x = t.value(input);
    const Tensor4& w = t.value(wid);
    const Tensor4& g = t.grad(self);
    const int n = x.n, ic = x.c, oc = w.n, kh = w.h, kw = w.w;
    const int oh = g.h, ow = g.w;
    const int64_t patch_len = static_cast<int64_t>(ic) * kh * kw;

    // grad bias: one owner per output channel.
    {
      Tensor4& gb = t.grad(bid);
      parallel_for(oc, [&](int64_t c0, int64_t c1) {
        for (int64_t c = c0; c < c1; ++c) {
          double acc = 0.0;
          for (int in = 0; in < n; ++in) {
            const float* gp = g.plane(in, static_cast<int>(c));
            for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) acc += gp[i];
          }
          gb.data[c] = static_cast<float>(gb.data[c] + acc);
        }
      });
    }

    // grad weight: per-oc 64-bit accumulators, rows visited in fixed order.
    {
      Tensor4& gw = t.grad(wid);
      std::vector<double> wacc(static_cast<size_t>(oc) * patch_len, 0.0);
      parallel_for(oc, [&](int64_t c0, int64_t c1) {
        std::vector<float> patch(static_cast<size_t>(ow) * patch_len);
        for (int in = 0; in < n; ++in) {
          for (int oy = 0; oy < oh; ++oy) {
            detail::build_patch_row(x, in, oy, ow, kh, kw, stride, pad, patch.data());
            for (int64_t c = c0; c < c1; ++c) {
              const float* grow = g.plane(in, static_cast<int>(c)) + static_cast<int64_t>(oy) * ow;
              double* acc = wacc.data() + c * patch_len;
              for (int ox = 0; ox < ow; ++ox) {
                const double gv = static_cast<double>(grow[ox]);
                if (gv == 0.0) continue;
                const float* prow = patch.data() + ox * patch_len;
                for (int64_t k = 0; k < patch_len; ++k)
                  acc[k] += gv * static_cast<double>(prow[k]);
              }
            }
          }
        }
      });
      parallel_for(static_cast<int64_t>(oc) * patch_len, [&](int64_t b0, int64_t e0) {
        for (int64_t i = b0; i < e0; ++i)
          gw.data[i] = static_cast<float>(static_cast<double>(gw.data[i]) + wacc[i]);
      });
    }

    // grad input: gather form, one owner per input pixel.
    {
      Tensor4& gx = t.grad(input);
      parallel_for(static_cast<int64_t>(n) * ic, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / ic);
          const int c = static_cast<int>(p % ic);
          float* gplane = gx.plane(in, c);
          for (int iy = 0; iy < x.h; ++iy) {
            for (int ix = 0; ix < x.w; ++ix) {
              double acc = 0.0;
              for (int ky = 0; ky < kh; ++ky) {
                const int ynum = iy + pad - ky;
                if (ynum < 0 || ynum % stride) continue;
                const int oy = ynum / stride;
                if (oy >= oh) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int xnum = ix + pad - kx;
                  if (xnum < 0 || xnum % stride) continue;
                  const int ox = xnum / stride;
                  if (ox >= ow) continue;
                  const int64_t goff = (static_cast<int64_t>(oy)) * ow + ox;
                  const int64_t woff = (static_cast<int64_t>(c) * kh + ky) * kw + kx;
                  const float* gbase = g.data.data() + (static_cast<int64_t>(in) * g.c) * oh * ow + goff;
                  const float* wbase = w.data.data() + woff;
                  const int64_t gstride = static_cast<int64_t>(oh) * ow;
                  const int64_t wstride = patch_len;
                  for (int o = 0; o < oc; ++o)
                    acc += static_cast<double>(gbase[o * gstride]) *
                           static_cast<double>(wbase[o * wstride]);
                }
              }
              gplane[static_cast<int64_t>(iy) * x.w + ix] =
                  static_cast<float>(gplane[static_cast<int64_t>(iy) * x.w + ix] + acc);
            }
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline Tape::Id leaky_relu(Tape& tape, Tape::Id input, float slope) {
  if (!(slope >= 0.0f && slope < 1.0f))
    throw ContractError("leaky_relu: slope must be in [0, 1), got " + std::to_string(slope));
  Tensor4 out = detail::map_elementwise(tape.value(input),
                                        [slope](float v) { return v >= 0.0f ? v : slope * v; });
  return tape.emit(std::move(out), [input, slope](Tape& t, Tape::Id self) {
    const Tensor4& x = t.value(input);
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    const float* xp = x.data.data();
    const float* gp = g.data.data();
    float* dst = gx.data.data();
    parallel_for(x.numel(), [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) dst[i] += gp[i] * (xp[i] >= 0.0f ? 1.0f : slope);
    });
  });
}

inline Tape::Id sigmoid(Tape& tape, Tape::Id input) {
  // Clamped one step inside (0, 1) so saturated inputs stay strictly interior.
  const float lo = std::nextafter(0.0f, 1.0f);
  const float hi = std::nextafter(1.0f, 0.0f);
  Tensor4 out = detail::map_elementwise(tape.value(input), [lo, hi](float v) {
    float s = 1.0f / (1.0f + std::exp(-v));
    if (s < lo) s = lo;
    if (s > hi) s = hi;
    return s;
  });
  return tape.emit(std::move(out), [input](Tape& t, Tape::Id self) {
    const Tensor4& y = t.value(self);
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    const float* yp = y.data.data();
    const float* gp = g.data.data();
    float* dst = gx.data.data();
    parallel_for(y.numel(), [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) dst[i] += gp[i] * yp[i] * (1.0f - yp[i]);
    });
  });
}

// ---------------------------------------------------------------------------
// upsample_bilinear_2x — align-corners-false, clamped borders, every output
// multiplied by value_scale (2 for flow so pixel units track resolution).
// ---------------------------------------------------------------------------

namespace detail {
struct UpsampleTap {
  int i0, i1;
  float w1;  // weight of i1; i0 gets (1 - w1)
};

inline std::vector<UpsampleTap> upsample_taps(int out_dim, int in_dim) {
  std::vector<UpsampleTap> taps(out_dim);
  for (int o = 0; o < out_dim; ++o) {
    const float src = static_cast<float>(o) * 0.5f - 0.25f;
    const float f = std::floor(src);
    int i0 = static_cast<int>(f);
    float w1 = src - f;
    int i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i0 > in_dim - 1) i0 = in_dim - 1;
    if (i1 < 0) i1 = 0;
    if (i1 > in_dim - 1) i1 = in_dim - 1;
    taps[o] = UpsampleTap{i0, i1, w1};
  }
  return taps;
}
}  // namespace detail

inline Tape::Id upsample_bilinear_2x(Tape& tape, Tape::Id input, float value_scale) {
  const Tensor4& x = tape.value(input);
  if (x.h < 1 || x.w < 1)
    throw ShapeError("upsample_bilinear_2x: empty spatial dims " + x.shape_str() + " (axis h/w)");
  const int oh = 2 * x.h, ow = 2 * x.w;
  Tensor4 out(x.n, x.c, oh, ow);
  const auto ty = detail::upsample_taps(oh, x.h);
  const auto tx = detail::upsample_taps(ow, x.w);
  parallel_for(static_cast<int64_t>(x.n) * x.c, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int in = static_cast<int>(p / x.c);
      const int c = static_cast<int>(p % x.c);
      const float* src = x.plane(in, c);
      float* dst = out.plane(in, c);
      for (int oy = 0; oy < oh; ++oy) {
        const auto& a = ty[oy];
        const float* r0 = src + static_cast<int64_t>(a.i0) * x.w;
        const float* r1 = src + static_cast<int64_t>(a.i1) * x.w;
        float* orow = dst + static_cast<int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const auto& b = tx[ox];
          const float top = (1.0f - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
          const float bot = (1.0f - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
          orow[ox] = ((1.0f - a.w1) * top + a.w1 * bot) * value_scale;
        }
      }
    }
  });
  return tape.emit(std::move(out), [input, value_scale](Tape& t, Tape::Id self) {
    const Tensor4& x = t.value(input);
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    const int oh = g.h, ow = g.w;
    const auto ty = detail::upsample_taps(oh, x.h);
    const auto tx = detail::upsample_taps(ow, x.w);
    parallel_for(static_cast<int64_t>(x.n) * x.c, [&](int64_t p0, int64_t p1) {
      for (int64_t p = p0; p < p1; ++p) {
        const int in = static_cast<int>(p / x.c);
        const int c = static_cast<int>(p % x.c);
        const float* gp = g.plane(in, c);
        float* dst = gx.plane(in, c);
        for (int oy = 0; oy < oh; ++oy) {
          const auto& a = ty[oy];
          for (int ox = 0; ox < ow; ++ox) {
            const auto& b = tx[ox];
            const float gv = gp[static_cast<int64_t>(oy) * ow + ox] * value_scale;
            dst[static_cast<int64_t>(a.i0) * x.w + b.i0] += (1.0f - a.w1) * (1.0f - b.w1) * gv;
            dst[static_cast<int64_t>(a.i0) * x.w + b.i1] += (1.0f - a.w1) * b.w1 * gv;
            dst[static_cast<int64_t>(a.i1) * x.w + b.i0] += a.w1 * (1.0f - b.w1) * gv;
            dst[static_cast<int64_t>(a.i1) * x.w + b.i1] += a.w1 * b.w1 * gv;
          }
        }
      }
    });
  });
}

// ---------------------------------------------------------------------------
// bilinear_sample — gather feature values at per-pixel coordinates (pixel
// units). Out-of-frame corner reads are zero; gradients flow to the feature
// and to both coordinate maps.
// ---------------------------------------------------------------------------

inline Tape::Id bilinear_sample(Tape& tape, Tape::Id feature, Tape::Id coords_x,
                                Tape::Id coords_y) {
  const Tensor4& f = tape.value(feature);
  const Tensor4& cx = tape.value(coords_x);
  const Tensor4& cy = tape.value(coords_y);
  if (cx.n != f.n)
    throw ShapeError("bilinear_sample: coords batch " + std::to_string(cx.n) +
                     " != feature batch " + std::to_string(f.n) + " (axis n)");
  if (!cx.same_shape(cy))
    throw ShapeError("bilinear_sample: coords_x " + cx.shape_str() + " != coords_y " +
                     cy.shape_str());
  if (cx.c != 1)
    throw ShapeError("bilinear_sample: coords must have 1 channel, got " +
                     std::to_string(cx.c) + " (axis c)");
  const int oh = cx.h, ow = cx.w;
  Tensor4 out(f.n, f.c, oh, ow);
  parallel_for(static_cast<int64_t>(f.n) * oh, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int in = static_cast<int>(r / oh);
      const int y = static_cast<int>(r % oh);
      const float* xrow = cx.plane(in, 0) + static_cast<int64_t>(y) * ow;
      const float* yrow = cy.plane(in, 0) + static_cast<int64_t>(y) * ow;
      for (int x = 0; x < ow; ++x) {
        const auto b = detail::make_bilinear_coeff(xrow[x], yrow[x]);
        for (int c = 0; c < f.c; ++c) {
          out.plane(in, c)[static_cast<int64_t>(y) * ow + x] =
              detail::sample_plane(f.plane(in, c), f.w, f.h, b, 0, 0);
        }
      }
    }
  });
  return tape.emit(std::move(out), [feature, coords_x, coords_y](Tape& t, Tape::Id self) {
    const Tensor4& f = t.value(feature);
    const Tensor4& cx = t.value(coords_x);
    const Tensor4& cy = t.value(coords_y);
    const Tensor4& g = t.grad(self);
    const int oh = cx.h, ow = cx.w;

    {  // feature gradient: scatter per plane.
      Tensor4& gf = t.grad(feature);
      parallel_for(static_cast<int64_t>(f.n) * f.c, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / f.c);
          const int c = static_cast<int>(p % f.c);
          float* gplane = gf.plane(in, c);
          const float* gp = g.plane(in, c);
          const float* xp = cx.plane(in, 0);
          const float* yp = cy.plane(in, 0);
          for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) {
            const auto b = detail::make_bilinear_coeff(xp[i], yp[i]);
            detail::scatter_bilinear(gplane, f.w, f.h, b, 0, 0, gp[i]);
          }
        }
      });
    }
    {  // coordinate gradients: one owner per output pixel.
      Tensor4& gcx = t.grad(coords_x);
      Tensor4& gcy = t.grad(coords_y);
      parallel_for(static_cast<int64_t>(f.n) * oh, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
          const int in = static_cast<int>(r / oh);
          const int y = static_cast<int>(r % oh);
          const int64_t off = static_cast<int64_t>(y) * ow;
          const float* xrow = cx.plane(in, 0) + off;
          const float* yrow = cy.plane(in, 0) + off;
          float* gxrow = gcx.plane(in, 0) + off;
          float* gyrow = gcy.plane(in, 0) + off;
          for (int x = 0; x < ow; ++x) {
            const auto b = detail::make_bilinear_coeff(xrow[x], yrow[x]);
            double ax = 0.0, ay = 0.0;
            for (int c = 0; c < f.c; ++c) {
              const auto r4 = detail::read_corners(f.plane(in, c), f.w, f.h, b, 0, 0);
              const float gv = g.plane(in, c)[off + x];
              ax += static_cast<double>(gv) * detail::bilerp_ddx(b, r4);
              ay += static_cast<double>(gv) * detail::bilerp_ddy(b, r4);
            }
            gxrow[x] += static_cast<float>(ax);
            gyrow[x] += static_cast<float>(ay);
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// concat / slice along the channel axis
// ---------------------------------------------------------------------------

inline Tape::Id concat_channels(Tape& tape, const std::vector<Tape::Id>& parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  const Tensor4& first = tape.value(parts[0]);
  int total_c = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor4& p = tape.value(parts[i]);
    if (p.n != first.n)
      throw ShapeError("concat_channels: part " + std::to_string(i) + " batch " +
                       std::to_string(p.n) + " != " + std::to_string(first.n) + " (axis n)");
    if (p.h != first.h || p.w != first.w)
      throw ShapeError("concat_channels: part " + std::to_string(i) + " spatial " +
                       std::to_string(p.h) + "x" + std::to_string(p.w) + " != " +
                       std::to_string(first.h) + "x" + std::to_string(first.w) + " (axis h/w)");
    total_c += p.c;
  }
  Tensor4 out(first.n, total_c, first.h, first.w);
  const int64_t hw = static_cast<int64_t>(first.h) * first.w;
  int coff = 0;
  for (const Tape::Id id : parts) {
    const Tensor4& p = tape.value(id);
    for (int in = 0; in < p.n; ++in)
      std::memcpy(out.plane(in, coff), p.plane(in, 0), sizeof(float) * hw * p.c);
    coff += p.c;
  }
  return tape.emit(std::move(out), [parts](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    const int64_t hw = static_cast<int64_t>(g.h) * g.w;
    int coff = 0;
    for (const Tape::Id id : parts) {
      Tensor4& gp = t.grad(id);
      for (int in = 0; in < gp.n; ++in) {
        const float* src = g.plane(in, coff);
        float* dst = gp.plane(in, 0);
        for (int64_t i = 0; i < hw * gp.c; ++i) dst[i] += src[i];
      }
      coff += gp.c;
    }
  });
}

inline Tape::Id slice_channels(Tape& tape, Tape::Id input, int c_begin, int c_end) {
  const Tensor4& x = tape.value(input);
  if (c_begin < 0 || c_end > x.c || c_begin >= c_end)
    throw ShapeError("slice_channels: range [" + std::to_string(c_begin) + ", " +
                     std::to_string(c_end) + ") invalid for " + std::to_string(x.c) +
                     " channels (axis c)");
  Tensor4 out(x.n, c_end - c_begin, x.h, x.w);
  const int64_t hw = static_cast<int64_t>(x.h) * x.w;
  for (int in = 0; in < x.n; ++in)
    std::memcpy(out.plane(in, 0), x.plane(in, c_begin), sizeof(float) * hw * out.c);
  return tape.emit(std::move(out), [input, c_begin](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    const int64_t hw = static_cast<int64_t>(g.h) * g.w;
    for (int in = 0; in < g.n; ++in) {
      const float* src = g.plane(in, 0);
      float* dst = gx.plane(in, c_begin);
      for (int64_t i = 0; i < hw * g.c; ++i) dst[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise / broadcast arithmetic
// ---------------------------------------------------------------------------

inline Tape::Id add(Tape& tape, Tape::Id a, Tape::Id b) {
  const Tensor4& ta = tape.value(a);
  const Tensor4& tb = tape.value(b);
  if (!ta.same_shape(tb))
    throw ShapeError("add: shapes " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor4 out = Tensor4::zeros_like(ta);
  const float* pa = ta.data.data();
  const float* pb = tb.data.data();
  float* po = out.data.data();
  parallel_for(ta.numel(), [&](int64_t b0, int64_t e0) {
    for (int64_t i = b0; i < e0; ++i) po[i] = pa[i] + pb[i];
  });
  return tape.emit(std::move(out), [a, b](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    Tensor4& ga = t.grad(a);
    Tensor4& gb = t.grad(b);
    const float* gp = g.data.data();
    parallel_for(g.numel(), [&](int64_t b0, int64_t e0) {
      for (int64_t i = b0; i < e0; ++i) ga.data[i] += gp[i];
    });
    parallel_for(g.numel(), [&](int64_t b0, int64_t e0) {
      for (int64_t i = b0; i < e0; ++i) gb.data[i] += gp[i];
    });
  });
}

inline Tape::Id mul(Tape& tape, Tape::Id a, Tape::Id b) {
  const Tensor4& ta = tape.value(a);
  const Tensor4& tb = tape.value(b);
  if (!ta.same_shape(tb))
    throw ShapeError("mul: shapes " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor4 out = Tensor4::zeros_like(ta);
  for (int64_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  return tape.emit(std::move(out), [a, b](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    const Tensor4& ta = t.value(a);
    const Tensor4& tb = t.value(b);
    Tensor4& ga = t.grad(a);
    Tensor4& gb = t.grad(b);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * tb.data[i];
      gb.data[i] += g.data[i] * ta.data[i];
    }
  });
}

inline Tape::Id scale(Tape& tape, Tape::Id input, float s) {
  Tensor4 out = detail::map_elementwise(tape.value(input), [s](float v) { return s * v; });
  return tape.emit(std::move(out), [input, s](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    for (int64_t i = 0; i < g.numel(); ++i) gx.data[i] += s * g.data[i];
  });
}

inline Tape::Id one_minus(Tape& tape, Tape::Id input) {
  Tensor4 out = detail::map_elementwise(tape.value(input), [](float v) { return 1.0f - v; });
  return tape.emit(std::move(out), [input](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    Tensor4& gx = t.grad(input);
    for (int64_t i = 0; i < g.numel(); ++i) gx.data[i] -= g.data[i];
  });
}

/// volume (n,C,h,w) * map (n,1,h,w), the map replicated across channels.
inline Tape::Id mul_broadcast(Tape& tape, Tape::Id volume, Tape::Id map) {
  const Tensor4& v = tape.value(volume);
  const Tensor4& m = tape.value(map);
  if (m.c != 1)
    throw ShapeError("mul_broadcast: map must have 1 channel, got " + std::to_string(m.c) +
                     " (axis c)");
  if (m.n != v.n || m.h != v.h || m.w != v.w)
    throw ShapeError("mul_broadcast: map " + m.shape_str() + " does not match volume " +
                     v.shape_str());
  Tensor4 out = Tensor4::zeros_like(v);
  const int64_t hw = static_cast<int64_t>(v.h) * v.w;
  parallel_for(static_cast<int64_t>(v.n) * v.c, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const int in = static_cast<int>(p / v.c);
      const int c = static_cast<int>(p % v.c);
      const float* vp = v.plane(in, c);
      const float* mp = m.plane(in, 0);
      float* op = out.plane(in, c);
      for (int64_t i = 0; i < hw; ++i) op[i] = vp[i] * mp[i];
    }
  });
  return tape.emit(std::move(out), [volume, map](Tape& t, Tape::Id self) {
    const Tensor4& g = t.grad(self);
    const Tensor4& v = t.value(volume);
    const Tensor4& m = t.value(map);
    const int64_t hw = static_cast<int64_t>(v.h) * v.w;
    {
      Tensor4& gv = t.grad(volume);
      parallel_for(static_cast<int64_t>(v.n) * v.c, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / v.c);
          const int c = static_cast<int>(p % v.c);
          const float* gp = g.plane(in, c);
          const float* mp = m.plane(in, 0);
          float* dst = gv.plane(in, c);
          for (int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * mp[i];
        }
      });
    }
    {
      Tensor4& gm = t.grad(map);
      parallel_for(static_cast<int64_t>(v.n) * v.h, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
          const int in = static_cast<int>(r / v.h);
          const int y = static_cast<int>(r % v.h);
          const int64_t off = static_cast<int64_t>(y) * v.w;
          float* dst = gm.plane(in, 0) + off;
          for (int x = 0; x < v.w; ++x) {
            double acc = 0.0;
            for (int c = 0; c < v.c; ++c)
              acc += static_cast<double>(g.plane(in, c)[off + x]) *
                     static_cast<double>(v.plane(in, c)[off + x]);
            dst[x] += static_cast<float>(acc);
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tape::Id sum_all(Tape& tape, Tape::Id input) {
  const Tensor4& x = tape.value(input);
  double acc = 0.0;
  for (float v : x.data) acc += static_cast<double>(v);
  Tensor4 out(1, 1, 1, 1);
  out.data[0] = static_cast<float>(acc);
  return tape.emit(std::move(out), [input](Tape& t, Tape::Id self) {
    const float gv = t.grad(self).data[0];
    Tensor4& gx = t.grad(input);
    for (auto& v : gx.data) v += gv;
  });
}

/// Sum over pixels of the per-pixel L2 norm of (pred - target) across
/// channels. The workhorse of the multi-scale loss.
inline Tape::Id l2_diff_sum(Tape& tape, Tape::Id pred, Tape::Id target) {
  const Tensor4& p = tape.value(pred);
  const Tensor4& q = tape.value(target);
  if (!p.same_shape(q))
    throw ShapeError("l2_diff_sum: shapes " + p.shape_str() + " vs " + q.shape_str());
  double acc = 0.0;
  const int64_t hw = static_cast<int64_t>(p.h) * p.w;
  for (int in = 0; in < p.n; ++in) {
    for (int64_t i = 0; i < hw; ++i) {
      double sq = 0.0;
      for (int c = 0; c < p.c; ++c) {
        const double d = static_cast<double>(p.plane(in, c)[i]) -
                         static_cast<double>(q.plane(in, c)[i]);
        sq += d * d;
      }
      acc += std::sqrt(sq);
    }
  }
  Tensor4 out(1, 1, 1, 1);
  out.data[0] = static_cast<float>(acc);
  return tape.emit(std::move(out), [pred, target](Tape& t, Tape::Id self) {
    const float gv = t.grad(self).data[0];
    const Tensor4& p = t.value(pred);
    const Tensor4& q = t.value(target);
    Tensor4& gp = t.grad(pred);
    Tensor4& gq = t.grad(target);
    const int64_t hw = static_cast<int64_t>(p.h) * p.w;
    for (int in = 0; in < p.n; ++in) {
      for (int64_t i = 0; i < hw; ++i) {
        double sq = 0.0;
        for (int c = 0; c < p.c; ++c) {
          const double d = static_cast<double>(p.plane(in, c)[i]) -
                           static_cast<double>(q.plane(in, c)[i]);
          sq += d * d;
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) continue;
        const double coeff = static_cast<double>(gv) / norm;
        for (int c = 0; c < p.c; ++c) {
          const double d = static_cast<double>(p.plane(in, c)[i]) -
                           static_cast<double>(q.plane(in, c)[i]);
          gp.plane(in, c)[i] += static_cast<float>(coeff * d);
          gq.plane(in, c)[i] -= static_cast<float>(coeff * d);
        }
      }
    }
  });
}

/// Sum of squared values across a set of parameters (weight-decay term).
inline Tape::Id l2_squared(Tape& tape, const std::vector<Param*>& params) {
  std::vector<Tape::Id> ids;
  ids.reserve(params.size());
  double acc = 0.0;
  for (Param* p : params) {
    ids.push_back(tape.param(*p));
    for (float v : p->value.data) acc += static_cast<double>(v) * static_cast<double>(v);
  }
  Tensor4 out(1, 1, 1, 1);
  out.data[0] = static_cast<float>(acc);
  return tape.emit(std::move(out), [ids](Tape& t, Tape::Id self) {
    const float gv = t.grad(self).data[0];
    for (const Tape::Id id : ids) {
      const Tensor4& v = t.value(id);
      Tensor4& g = t.grad(id);
      for (int64_t i = 0; i < v.numel(); ++i) g.data[i] += 2.0f * v.data[i] * gv;
    }
  });
}

}  // namespace oasflow
