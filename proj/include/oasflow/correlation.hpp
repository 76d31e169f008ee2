#pragma once

#include "oasflow/ops.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// SearchSpec — square search window of radius r; offsets d = (dy, dx) span
// [-r, r]^2 and map to cost channels row-major, dy outer. radius 4 gives the
// 81-channel volume.
// ---------------------------------------------------------------------------

struct SearchSpec {
  int radius = 4;
  bool normalize = true;  // divide inner products by feature channel count

  int window() const { return 2 * radius + 1; }
  int channels() const { return window() * window(); }

  int channel_of(int dy, int dx) const {
    return (dy + radius) * window() + (dx + radius);
  }
  std::pair<int, int> offset_of(int channel) const {
    return {channel / window() - radius, channel % window() - radius};
  }
};

/// Cost volume handle: (2r+1)^2 channels of matching costs living on a tape.
struct CostVolume {
  Tape::Id costs;
  SearchSpec spec;
};

namespace detail {

inline void check_flow_shape(const char* op, const Tensor4& feat, const Tensor4& flow) {
  if (flow.c != 2)
    throw ShapeError(std::string(op) + ": flow must have 2 channels, got " +
                     std::to_string(flow.c) + " (axis c)");
  if (flow.n != feat.n)
    throw ShapeError(std::string(op) + ": flow batch " + std::to_string(flow.n) +
                     " != feature batch " + std::to_string(feat.n) + " (axis n)");
  if (flow.h != feat.h || flow.w != feat.w)
    throw ShapeError(std::string(op) + ": flow spatial " + std::to_string(flow.h) + "x" +
                     std::to_string(flow.w) + " != feature " + std::to_string(feat.h) + "x" +
                     std::to_string(feat.w) + " (axis h/w)");
}

inline void check_pair_shape(const char* op, const Tensor4& f1, const Tensor4& f2) {
  if (!f1.same_shape(f2))
    throw ShapeError(std::string(op) + ": feature shapes " + f1.shape_str() + " vs " +
                     f2.shape_str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// warp — backward warp of the target feature map: out(x) = target(x + flow(x))
// via zero-padded bilinear sampling. Differentiable in target and flow.
// ---------------------------------------------------------------------------

inline Tape::Id warp(Tape& tape, Tape::Id target, Tape::Id flow) {
  const Tensor4& f = tape.value(target);
  const Tensor4& fl = tape.value(flow);
  detail::check_flow_shape("warp", f, fl);
  Tensor4 out = Tensor4::zeros_like(f);
  parallel_for(static_cast<int64_t>(f.n) * f.h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int in = static_cast<int>(r / f.h);
      const int y = static_cast<int>(r % f.h);
      const int64_t off = static_cast<int64_t>(y) * f.w;
      const float* urow = fl.plane(in, 0) + off;
      const float* vrow = fl.plane(in, 1) + off;
      for (int x = 0; x < f.w; ++x) {
        const float sx = static_cast<float>(x) + urow[x];
        const float sy = static_cast<float>(y) + vrow[x];
        const auto b = detail::make_bilinear_coeff(sx, sy);
        for (int c = 0; c < f.c; ++c)
          out.plane(in, c)[off + x] = detail::sample_plane(f.plane(in, c), f.w, f.h, b, 0, 0);
      }
    }
  });
  return tape.emit(std::move(out), [target, flow](Tape& t, Tape::Id self) {
    const Tensor4& f = t.value(target);
    const Tensor4& fl = t.value(flow);
    const Tensor4& g = t.grad(self);
    {  // target gradient: scatter per plane.
      Tensor4& gf = t.grad(target);
      parallel_for(static_cast<int64_t>(f.n) * f.c, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / f.c);
          const int c = static_cast<int>(p % f.c);
          float* gplane = gf.plane(in, c);
          const float* gp = g.plane(in, c);
          const float* up = fl.plane(in, 0);
          const float* vp = fl.plane(in, 1);
          for (int y = 0; y < f.h; ++y) {
            const int64_t off = static_cast<int64_t>(y) * f.w;
            for (int x = 0; x < f.w; ++x) {
              const auto b = detail::make_bilinear_coeff(static_cast<float>(x) + up[off + x],
                                                         static_cast<float>(y) + vp[off + x]);
              detail::scatter_bilinear(gplane, f.w, f.h, b, 0, 0, gp[off + x]);
            }
          }
        }
      });
    }
    {  // flow gradient: one owner per pixel.
      Tensor4& gfl = t.grad(flow);
      parallel_for(static_cast<int64_t>(f.n) * f.h, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
          const int in = static_cast<int>(r / f.h);
          const int y = static_cast<int>(r % f.h);
          const int64_t off = static_cast<int64_t>(y) * f.w;
          const float* urow = fl.plane(in, 0) + off;
          const float* vrow = fl.plane(in, 1) + off;
          float* gu = gfl.plane(in, 0) + off;
          float* gv = gfl.plane(in, 1) + off;
          for (int x = 0; x < f.w; ++x) {
            const auto b = detail::make_bilinear_coeff(static_cast<float>(x) + urow[x],
                                                       static_cast<float>(y) + vrow[x]);
            double au = 0.0, av = 0.0;
            for (int c = 0; c < f.c; ++c) {
              const auto r4 = detail::read_corners(f.plane(in, c), f.w, f.h, b, 0, 0);
              const float gvc = g.plane(in, c)[off + x];
              au += static_cast<double>(gvc) * detail::bilerp_ddx(b, r4);
              av += static_cast<double>(gvc) * detail::bilerp_ddy(b, r4);
            }
            gu[x] += static_cast<float>(au);
            gv[x] += static_cast<float>(av);
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// correlate_shift — inner products between f1(x) and a zero-padded feature
// plane at integer offsets x+d. Stage two of the warping-based volume.
// ---------------------------------------------------------------------------

inline Tape::Id correlate_shift(Tape& tape, Tape::Id f1, Tape::Id f2, const SearchSpec& spec) {
  const Tensor4& a = tape.value(f1);
  const Tensor4& b = tape.value(f2);
  detail::check_pair_shape("correlate_shift", a, b);
  const int r = spec.radius, win = spec.window();
  const double inv_c = spec.normalize ? 1.0 / static_cast<double>(a.c) : 1.0;
  Tensor4 out(a.n, spec.channels(), a.h, a.w);
  const int64_t hw = static_cast<int64_t>(a.h) * a.w;
  parallel_for(static_cast<int64_t>(a.n) * a.h, [&](int64_t r0, int64_t r1) {
    for (int64_t row = r0; row < r1; ++row) {
      const int in = static_cast<int>(row / a.h);
      const int y = static_cast<int>(row % a.h);
      const int64_t off = static_cast<int64_t>(y) * a.w;
      for (int x = 0; x < a.w; ++x) {
        for (int dy = -r; dy <= r; ++dy) {
          const int ty = y + dy;
          const bool yin = (ty >= 0 && ty < a.h);
          for (int dx = -r; dx <= r; ++dx) {
            const int tx = x + dx;
            const int ch = (dy + r) * win + (dx + r);
            float val = 0.0f;
            if (yin && tx >= 0 && tx < a.w) {
              double acc = 0.0;
              const int64_t src = off + x;
              const int64_t dst = static_cast<int64_t>(ty) * a.w + tx;
              for (int c = 0; c < a.c; ++c)
                acc += static_cast<double>(a.plane(in, c)[src]) *
                       static_cast<double>(b.plane(in, c)[dst]);
              val = static_cast<float>(acc * inv_c);
            }
            out.plane(in, ch)[off + x] = val;
          }
        }
      }
    }
  });
  (void)hw;
  return tape.emit(std::move(out), [f1, f2, spec](Tape& t, Tape::Id self) {
    const Tensor4& a = t.value(f1);
    const Tensor4& b = t.value(f2);
    const Tensor4& g = t.grad(self);
    const int r = spec.radius, win = spec.window();
    const double inv_c = spec.normalize ? 1.0 / static_cast<double>(a.c) : 1.0;
    {  // d/d f1: gather over offsets.
      Tensor4& ga = t.grad(f1);
      parallel_for(static_cast<int64_t>(a.n) * a.c, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / a.c);
          const int c = static_cast<int>(p % a.c);
          const float* bp = b.plane(in, c);
          float* gp = ga.plane(in, c);
          for (int y = 0; y < a.h; ++y) {
            const int64_t off = static_cast<int64_t>(y) * a.w;
            for (int x = 0; x < a.w; ++x) {
              double acc = 0.0;
              for (int dy = -r; dy <= r; ++dy) {
                const int ty = y + dy;
                if (ty < 0 || ty >= a.h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                  const int tx = x + dx;
                  if (tx < 0 || tx >= a.w) continue;
                  const int ch = (dy + r) * win + (dx + r);
                  acc += static_cast<double>(g.plane(in, ch)[off + x]) *
                         static_cast<double>(bp[static_cast<int64_t>(ty) * a.w + tx]);
                }
              }
              gp[off + x] += static_cast<float>(acc * inv_c);
            }
          }
        }
      });
    }
    {  // d/d f2: cost (x, d) touches f2 at x+d, so gather from x = t - d.
      Tensor4& gb = t.grad(f2);
      parallel_for(static_cast<int64_t>(a.n) * a.c, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
          const int in = static_cast<int>(p / a.c);
          const int c = static_cast<int>(p % a.c);
          const float* ap = a.plane(in, c);
          float* gp = gb.plane(in, c);
          for (int ty = 0; ty < a.h; ++ty) {
            for (int tx = 0; tx < a.w; ++tx) {
              double acc = 0.0;
              for (int dy = -r; dy <= r; ++dy) {
                const int y = ty - dy;
                if (y < 0 || y >= a.h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                  const int x = tx - dx;
                  if (x < 0 || x >= a.w) continue;
                  const int ch = (dy + r) * win + (dx + r);
                  const int64_t src = static_cast<int64_t>(y) * a.w + x;
                  acc += static_cast<double>(g.plane(in, ch)[src]) *
                         static_cast<double>(ap[src]);
                }
              }
              gp[static_cast<int64_t>(ty) * a.w + tx] += static_cast<float>(acc * inv_c);
            }
          }
        }
      });
    }
  });
}

// ---------------------------------------------------------------------------
// cost_volume_warping — Eq. 1: materialize f_warp = warp(f2, flow), then
// correlate f1 against integer-shifted f_warp planes.
// ---------------------------------------------------------------------------

inline CostVolume cost_volume_warping(Tape& tape, Tape::Id f1, Tape::Id f2, Tape::Id flow,
                                      const SearchSpec& spec) {
  detail::check_pair_shape("cost_volume_warping", tape.value(f1), tape.value(f2));
  detail::check_flow_shape("cost_volume_warping", tape.value(f1), tape.value(flow));
  const Tape::Id warped = warp(tape, f2, flow);
  return CostVolume{correlate_shift(tape, f1, warped, spec), spec};
}

// ---------------------------------------------------------------------------
// cost_volume_sampling — Eq. 2: cost(x, d) = <f1(x), f2(x + flow(x) + d)> with
// one bilinear sample per (x, d) and no intermediate warped feature. The 81
// offsets share one fractional part, so corner weights are computed once per
// x; results are bit-identical to sampling each coordinate independently.
// ---------------------------------------------------------------------------

inline CostVolume cost_volume_sampling(Tape& tape, Tape::Id f1, Tape::Id f2, Tape::Id flow,
                                       const SearchSpec& spec) {
  const Tensor4& a = tape.value(f1);
  const Tensor4& b = tape.value(f2);
  const Tensor4& fl = tape.value(flow);
  detail::check_pair_shape("cost_volume_sampling", a, b);
  detail::check_flow_shape("cost_volume_sampling", a, fl);
  const int r = spec.radius, win = spec.window();
  const double inv_c = spec.normalize ? 1.0 / static_cast<double>(a.c) : 1.0;
  Tensor4 out(a.n, spec.channels(), a.h, a.w);
  parallel_for(static_cast<int64_t>(a.n) * a.h, [&](int64_t r0, int64_t r1) {
    for (int64_t row = r0; row < r1; ++row) {
      const int in = static_cast<int>(row / a.h);
      const int y = static_cast<int>(row % a.h);
      const int64_t off = static_cast<int64_t>(y) * a.w;
      const float* urow = fl.plane(in, 0) + off;
      const float* vrow = fl.plane(in, 1) + off;
      for (int x = 0; x < a.w; ++x) {
        const float sx = static_cast<float>(x) + urow[x];
        const float sy = static_cast<float>(y) + vrow[x];
        const auto bc = detail::make_bilinear_coeff(sx, sy);
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int ch = (dy + r) * win + (dx + r);
            double acc = 0.0;
            for (int c = 0; c < a.c; ++c) {
              const float s = detail::sample_plane(b.plane(in, c), b.w, b.h, bc, dx, dy);
              acc += static_cast<double>(a.plane(in, c)[off + x]) * static_cast<double>(s);
            }
            out.plane(in, ch)[off + x] = static_cast<float>(acc * inv_c);
          }
        }
      }
    }
  });
  const Tape::Id id =
      tape.emit(std::move(out), [f1, f2, flow, spec](Tape& t, Tape::Id self) {
        const Tensor4& a = t.value(f1);
        const Tensor4& b = t.value(f2);
        const Tensor4& fl = t.value(flow);
        const Tensor4& g = t.grad(self);
        const int r = spec.radius, win = spec.window();
        const double inv_c = spec.normalize ? 1.0 / static_cast<double>(a.c) : 1.0;

        {  // d/d f1 and d/d flow: one owner per source pixel.
          Tensor4& ga = t.grad(f1);
          Tensor4& gfl = t.grad(flow);
          parallel_for(static_cast<int64_t>(a.n) * a.h, [&](int64_t r0, int64_t r1) {
            for (int64_t row = r0; row < r1; ++row) {
              const int in = static_cast<int>(row / a.h);
              const int y = static_cast<int>(row % a.h);
              const int64_t off = static_cast<int64_t>(y) * a.w;
              const float* urow = fl.plane(in, 0) + off;
              const float* vrow = fl.plane(in, 1) + off;
              float* gu = gfl.plane(in, 0) + off;
              float* gv = gfl.plane(in, 1) + off;
              for (int x = 0; x < a.w; ++x) {
                const auto bc = detail::make_bilinear_coeff(static_cast<float>(x) + urow[x],
                                                            static_cast<float>(y) + vrow[x]);
                double au = 0.0, av = 0.0;
                for (int dy = -r; dy <= r; ++dy) {
                  for (int dx = -r; dx <= r; ++dx) {
                    const int ch = (dy + r) * win + (dx + r);
                    const double gd =
                        static_cast<double>(g.plane(in, ch)[off + x]) * inv_c;
                    if (gd == 0.0) continue;
                    for (int c = 0; c < a.c; ++c) {
                      const auto r4 = detail::read_corners(b.plane(in, c), b.w, b.h, bc, dx, dy);
                      const float s = detail::bilerp(bc, r4.v00, r4.v01, r4.v10, r4.v11);
                      const double f1v = static_cast<double>(a.plane(in, c)[off + x]);
                      ga.plane(in, c)[off + x] += static_cast<float>(gd * s);
                      au += gd * f1v * static_cast<double>(detail::bilerp_ddx(bc, r4));
                      av += gd * f1v * static_cast<double>(detail::bilerp_ddy(bc, r4));
                    }
                  }
                }
                gu[x] += static_cast<float>(au);
                gv[x] += static_cast<float>(av);
              }
            }
          });
        }
        {  // d/d f2: scatter into sampled corners, one owner per plane.
          Tensor4& gb = t.grad(f2);
          parallel_for(static_cast<int64_t>(a.n) * a.c, [&](int64_t p0, int64_t p1) {
            for (int64_t p = p0; p < p1; ++p) {
              const int in = static_cast<int>(p / a.c);
              const int c = static_cast<int>(p % a.c);
              float* gplane = gb.plane(in, c);
              const float* ap = a.plane(in, c);
              const float* up = fl.plane(in, 0);
              const float* vp = fl.plane(in, 1);
              for (int y = 0; y < a.h; ++y) {
                const int64_t off = static_cast<int64_t>(y) * a.w;
                for (int x = 0; x < a.w; ++x) {
                  const auto bc = detail::make_bilinear_coeff(
                      static_cast<float>(x) + up[off + x], static_cast<float>(y) + vp[off + x]);
                  const double f1v = static_cast<double>(ap[off + x]);
                  for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                      const int ch = (dy + r) * win + (dx + r);
                      const double gd =
                          static_cast<double>(g.plane(in, ch)[off + x]) * inv_c;
                      if (gd == 0.0) continue;
                      detail::scatter_bilinear(gplane, b.w, b.h, bc, dx, dy,
                                               static_cast<float>(gd * f1v));
                    }
                  }
                }
              }
            }
          });
        }
      });
  return CostVolume{id, spec};
}

}  // namespace oasflow
