#pragma once

// Double-precision reference evaluators for gradient verification. These are
// plain nested-loop implementations of the forward math, independent of the
// float32 kernels and of every adjoint they are used to check; nothing on the
// training or inference path includes this header.

#include "oasflow/loss.hpp"

namespace oasflow {
namespace reference {

struct DTensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  DTensor() = default;
  DTensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}

  int64_t numel() const { return static_cast<int64_t>(n) * c * h * w; }
  double& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<int64_t>(in) * c + ic) * h + iy) * w + ix];
  }
  double at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<int64_t>(in) * c + ic) * h + iy) * w + ix];
  }
};

inline DTensor lift(const Tensor4& t) {
  DTensor d(t.n, t.c, t.h, t.w);
  for (int64_t i = 0; i < t.numel(); ++i) d.data[i] = static_cast<double>(t.data[i]);
  return d;
}

inline DTensor conv2d(const DTensor& x, const DTensor& w, const DTensor& b, int stride,
                      int pad) {
  const int oh = (x.h + 2 * pad - w.h) / stride + 1;
  const int ow = (x.w + 2 * pad - w.w) / stride + 1;
  DTensor out(x.n, w.n, oh, ow);
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
                acc += x.at(n, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          out.at(n, oc, oy, ox) = acc;
        }
  return out;
}

inline DTensor leaky_relu(const DTensor& x, double slope) {
  DTensor out = x;
  for (auto& v : out.data) v = v >= 0.0 ? v : slope * v;
  return out;
}

inline DTensor sigmoid(const DTensor& x) {
  DTensor out = x;
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

inline DTensor upsample2x(const DTensor& x, double value_scale) {
  DTensor out(x.n, x.c, 2 * x.h, 2 * x.w);
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
            return x.at(n, c, clampi(yy, x.h - 1), clampi(xx, x.w - 1));
          };
          out.at(n, c, oy, ox) =
              ((1.0 - fy) * ((1.0 - fx) * read(y0, x0) + fx * read(y0, x0 + 1)) +
               fy * ((1.0 - fx) * read(y0 + 1, x0) + fx * read(y0 + 1, x0 + 1))) *
              value_scale;
        }
  return out;
}

inline double bilinear(const DTensor& t, int n, int c, double x, double y) {
  const double xf = std::floor(x), yf = std::floor(y);
  const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
  const double fx = x - xf, fy = y - yf;
  auto read = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= t.w || yy < 0 || yy >= t.h) return 0.0;
    return t.at(n, c, yy, xx);
  };
  return (1.0 - fy) * ((1.0 - fx) * read(y0, x0) + fx * read(y0, x0 + 1)) +
         fy * ((1.0 - fx) * read(y0 + 1, x0) + fx * read(y0 + 1, x0 + 1));
}

inline DTensor bilinear_sample(const DTensor& f, const DTensor& cx, const DTensor& cy) {
  DTensor out(f.n, f.c, cx.h, cx.w);
  for (int n = 0; n < f.n; ++n)
    for (int c = 0; c < f.c; ++c)
      for (int y = 0; y < cx.h; ++y)
        for (int x = 0; x < cx.w; ++x)
          out.at(n, c, y, x) = bilinear(f, n, c, cx.at(n, 0, y, x), cy.at(n, 0, y, x));
  return out;
}

inline DTensor warp(const DTensor& f, const DTensor& flow) {
  DTensor out(f.n, f.c, f.h, f.w);
  for (int n = 0; n < f.n; ++n)
    for (int c = 0; c < f.c; ++c)
      for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x)
          out.at(n, c, y, x) =
              bilinear(f, n, c, x + flow.at(n, 0, y, x), y + flow.at(n, 1, y, x));
  return out;
}

inline DTensor cost_volume_warping(const DTensor& f1, const DTensor& f2, const DTensor& flow,
                                   const SearchSpec& spec) {
  const int r = spec.radius, win = spec.window();
  DTensor warped(f1.n, f1.c, f1.h, f1.w);
  for (int n = 0; n < f1.n; ++n)
    for (int c = 0; c < f1.c; ++c)
      for (int y = 0; y < f1.h; ++y)
        for (int x = 0; x < f1.w; ++x)
          warped.at(n, c, y, x) =
              bilinear(f2, n, c, x + flow.at(n, 0, y, x), y + flow.at(n, 1, y, x));
  DTensor out(f1.n, spec.channels(), f1.h, f1.w);
  const double inv = spec.normalize ? 1.0 / f1.c : 1.0;
  for (int n = 0; n < f1.n; ++n)
    for (int y = 0; y < f1.h; ++y)
      for (int x = 0; x < f1.w; ++x)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int ty = y + dy, tx = x + dx;
            double acc = 0.0;
            if (ty >= 0 && ty < f1.h && tx >= 0 && tx < f1.w)
              for (int c = 0; c < f1.c; ++c) acc += f1.at(n, c, y, x) * warped.at(n, c, ty, tx);
            out.at(n, (dy + r) * win + (dx + r), y, x) = acc * inv;
          }
  return out;
}

inline DTensor cost_volume_sampling(const DTensor& f1, const DTensor& f2, const DTensor& flow,
                                    const SearchSpec& spec) {
  const int r = spec.radius, win = spec.window();
  DTensor out(f1.n, spec.channels(), f1.h, f1.w);
  const double inv = spec.normalize ? 1.0 / f1.c : 1.0;
  for (int n = 0; n < f1.n; ++n)
    for (int y = 0; y < f1.h; ++y)
      for (int x = 0; x < f1.w; ++x)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            double acc = 0.0;
            for (int c = 0; c < f1.c; ++c)
              acc += f1.at(n, c, y, x) * bilinear(f2, n, c, x + flow.at(n, 0, y, x) + dx,
                                                  y + flow.at(n, 1, y, x) + dy);
            out.at(n, (dy + r) * win + (dx + r), y, x) = acc * inv;
          }
  return out;
}

inline DTensor concat(const std::vector<const DTensor*>& parts) {
  int total = 0;
  for (const auto* p : parts) total += p->c;
  DTensor out(parts[0]->n, total, parts[0]->h, parts[0]->w);
  int coff = 0;
  for (const auto* p : parts) {
    for (int n = 0; n < p->n; ++n)
      for (int c = 0; c < p->c; ++c)
        for (int y = 0; y < p->h; ++y)
          for (int x = 0; x < p->w; ++x) out.at(n, coff + c, y, x) = p->at(n, c, y, x);
    coff += p->c;
  }
  return out;
}

inline DTensor mul_broadcast(const DTensor& v, const DTensor& m) {
  DTensor out = v;
  for (int n = 0; n < v.n; ++n)
    for (int c = 0; c < v.c; ++c)
      for (int y = 0; y < v.h; ++y)
        for (int x = 0; x < v.w; ++x) out.at(n, c, y, x) *= m.at(n, 0, y, x);
  return out;
}

inline DTensor one_minus(const DTensor& x) {
  DTensor out = x;
  for (auto& v : out.data) v = 1.0 - v;
  return out;
}

inline DTensor add(const DTensor& a, const DTensor& b) {
  DTensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
  return out;
}

inline double l2_diff_sum(const DTensor& p, const DTensor& q) {
  double total = 0.0;
  for (int n = 0; n < p.n; ++n)
    for (int y = 0; y < p.h; ++y)
      for (int x = 0; x < p.w; ++x) {
        double sq = 0.0;
        for (int c = 0; c < p.c; ++c) {
          const double d = p.at(n, c, y, x) - q.at(n, c, y, x);
          sq += d * d;
        }
        total += std::sqrt(sq);
      }
  return total;
}

inline DTensor downscale_flow(const DTensor& flow, int factor) {
  DTensor out(flow.n, flow.c, flow.h / factor, flow.w / factor);
  for (int n = 0; n < flow.n; ++n)
    for (int c = 0; c < flow.c; ++c)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < factor; ++ky)
            for (int kx = 0; kx < factor; ++kx)
              acc += flow.at(n, c, oy * factor + ky, ox * factor + kx);
          out.at(n, c, oy, ox) = acc / (static_cast<double>(factor) * factor) / factor;
        }
  return out;
}

// ---------------------------------------------------------------------------
// Full-model forward + multi-scale loss in double, mirroring OasNet wiring by
// parameter name. Any drift between this and the real forward makes the
// finite-difference suites fail loudly.
// ---------------------------------------------------------------------------

class ModelEvaluator {
 public:
  explicit ModelEvaluator(OasNet& model) : model_(model) {}

  double loss(const Tensor4& im1, const Tensor4& im2, const Tensor4& gt_flow,
              const LossConfig& cfg) const {
    const auto& net = model_.config();
    const auto p1 = pyramid(lift(im1));
    const auto p2 = pyramid(lift(im2));
    const DTensor gt = lift(gt_flow);

    double total = 0.0;
    DTensor flow, occ;
    bool have_prev = false;
    for (int level = net.levels(); level >= 2; --level) {
      const DTensor& f1 = p1[level - 1];
      const DTensor& f2 = p2[level - 1];
      DTensor flow0, occ0;
      if (!have_prev) {
        flow0 = DTensor(f1.n, 2, f1.h, f1.w);
        occ0 = DTensor(f1.n, 1, f1.h, f1.w);
        for (auto& v : occ0.data) v = 0.5;
      } else {
        flow0 = upsample2x(flow, 2.0);
        occ0 = upsample2x(occ, 1.0);
      }
      const SearchSpec sp = model_.spec();
      DTensor cost = net.mode == CorrelationMode::kSampling
                         ? cost_volume_sampling(f1, f2, flow0, sp)
                         : cost_volume_warping(f1, f2, flow0, sp);
      if (net.occlusion) {
        const DTensor b1 = conv2d(mul_broadcast(cost, occ0), param("dec.oa.conv1.w"),
                                  param("dec.oa.conv1.b"), 1, 1);
        const DTensor b2 = conv2d(mul_broadcast(cost, one_minus(occ0)),
                                  param("dec.oa.conv2.w"), param("dec.oa.conv2.b"), 1, 1);
        cost = leaky_relu(add(b1, b2), kLeakySlope);
      } else {
        cost = leaky_relu(
            conv2d(cost, param("dec.oa.bypass.w"), param("dec.oa.bypass.b"), 1, 1),
            kLeakySlope);
      }
      DTensor feat = f1;
      const std::string aname = "adapt" + std::to_string(level) + ".w";
      if (model_.params().find(aname) != nullptr)
        feat = conv2d(f1, param(aname), param("adapt" + std::to_string(level) + ".b"), 1, 0);

      DTensor x = concat({&cost, &feat, &flow0});
      for (size_t i = 0; i < net.decoder_channels.size(); ++i) {
        const std::string base = "dec.trunk" + std::to_string(i + 1);
        x = leaky_relu(conv2d(x, param(base + ".w"), param(base + ".b"), 1, 1), kLeakySlope);
      }
      const DTensor residual =
          conv2d(x, param("dec.flow_head.w"), param("dec.flow_head.b"), 1, 1);
      flow = add(flow0, residual);
      occ = sigmoid(conv2d(x, param("dec.occ_head.w"), param("dec.occ_head.b"), 1, 1));
      have_prev = true;

      const auto it = cfg.level_weights.find(level);
      const double alpha = it == cfg.level_weights.end() ? 0.0 : it->second;
      if (alpha > 0.0)
        total += alpha * l2_diff_sum(flow, downscale_flow(gt, 1 << level));
    }
    if (cfg.weight_decay > 0.0f) {
      double sq = 0.0;
      for (const auto& p : model_.params())
        for (float v : p->value.data) sq += static_cast<double>(v) * static_cast<double>(v);
      total += static_cast<double>(cfg.weight_decay) * sq;
    }
    return total;
  }

 private:
  DTensor param(const std::string& name) const {
    Param* p = model_.params().find(name);
    if (p == nullptr) throw ContractError("reference: missing parameter '" + name + "'");
    return lift(p->value);
  }

  std::vector<DTensor> pyramid(const DTensor& image) const {
    std::vector<DTensor> feats;
    DTensor cur = image;
    for (int k = 1; k <= model_.config().levels(); ++k) {
      const std::string base = "enc" + std::to_string(k);
      cur = leaky_relu(conv2d(cur, param(base + ".conv1.w"), param(base + ".conv1.b"), 2, 1),
                       kLeakySlope);
      cur = leaky_relu(conv2d(cur, param(base + ".conv2.w"), param(base + ".conv2.b"), 1, 1),
                       kLeakySlope);
      feats.push_back(cur);
    }
    return feats;
  }

  OasNet& model_;
};

}  // namespace reference
}  // namespace oasflow
