#pragma once

#include "oasflow/ops.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Layered synthetic scenes with exact ground truth.
//
// Each layer owns a noise texture anchored in frame-1 coordinates and moves
// rigidly by its translation. Frame 2 is composited back-to-front; frame 1 is
// pulled from frame 2 through the ground-truth flow (so brightness constancy
// holds bit-exactly off occlusions), with occluded pixels rendered from the
// layer's own texture. gt_occ marks frame-1 pixels whose target sample is
// covered by a nearer layer or leaves the frame.
// ---------------------------------------------------------------------------

struct SceneLayer {
  // im1 footprint, closed pixel ranges; the background spans the frame.
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float tx = 0, ty = 0;
};

struct SceneSpec {
  int height = 64, width = 64;
  std::vector<SceneLayer> layers;  // [0] background, later entries are nearer
  uint64_t texture_seed = 0;
  int smooth_passes = 2;
};

struct SyntheticSample {
  Tensor4 im1, im2;   // (1, 3, h, w) in [0, 1]
  Tensor4 gt_flow;    // (1, 2, h, w) pixels
  Tensor4 gt_occ;     // (1, 1, h, w), 1 = occluded in im1
};

namespace detail {

inline std::vector<float> make_texture(Rng& rng, int ch, int hh, int ww, int smooth_passes,
                                       const float* gains) {
  std::vector<float> tex(static_cast<size_t>(ch) * hh * ww);
  for (auto& v : tex) v = static_cast<float>(rng.uniform());
  std::vector<float> tmp(static_cast<size_t>(hh) * ww);
  for (int c = 0; c < ch; ++c) {
    float* plane = tex.data() + static_cast<size_t>(c) * hh * ww;
    for (int pass = 0; pass < smooth_passes; ++pass) {
      for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < ww; ++x) {
          double acc = 0.0;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= hh) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= ww) continue;
              acc += plane[static_cast<size_t>(yy) * ww + xx];
              ++cnt;
            }
          }
          tmp[static_cast<size_t>(y) * ww + x] = static_cast<float>(acc / cnt);
        }
      }
      std::copy(tmp.begin(), tmp.end(), plane);
    }
    // Blurring concentrates values near 0.5; restore contrast.
    const float boost = smooth_passes > 0 ? 3.2f : 1.0f;
    for (size_t i = 0; i < tmp.size(); ++i) {
      float v = 0.5f + (plane[i] - 0.5f) * boost;
      v = std::min(std::max(v, 0.02f), 0.98f) * gains[c];
      plane[i] = v;
    }
  }
  return tex;
}

}  // namespace detail

inline SyntheticSample render_scene(const SceneSpec& spec) {
  const int h = spec.height, w = spec.width;
  const int L = static_cast<int>(spec.layers.size());
  if (L == 0) throw ContractError("render_scene: no layers");

  float max_t = 0.0f;
  for (const auto& l : spec.layers)
    max_t = std::max(max_t, std::max(std::abs(l.tx), std::abs(l.ty)));
  const int margin = static_cast<int>(std::ceil(max_t)) + 2;
  const int ch = h + 2 * margin, cw = w + 2 * margin;

  Rng rng(spec.texture_seed);
  std::vector<std::vector<float>> textures(L);
  for (int l = 0; l < L; ++l) {
    float gains[3];
    for (float& g : gains) g = static_cast<float>(rng.uniform(0.55, 1.0));
    textures[l] = detail::make_texture(rng, 3, ch, cw, spec.smooth_passes, gains);
  }

  auto in_layer_im1 = [&](int l, float x, float y) {
    if (l == 0) return true;
    const auto& r = spec.layers[l];
    return x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1;
  };
  auto in_layer_im2 = [&](int l, float x, float y) {
    if (l == 0) return true;
    const auto& r = spec.layers[l];
    return x >= r.x0 + r.tx && x <= r.x1 + r.tx && y >= r.y0 + r.ty && y <= r.y1 + r.ty;
  };
  auto top_layer_im1 = [&](int x, int y) {
    for (int l = L - 1; l >= 1; --l)
      if (in_layer_im1(l, static_cast<float>(x), static_cast<float>(y))) return l;
    return 0;
  };
  auto top_layer_im2 = [&](int x, int y) {
    for (int l = L - 1; l >= 1; --l)
      if (in_layer_im2(l, static_cast<float>(x), static_cast<float>(y))) return l;
    return 0;
  };
  auto texture_at = [&](int l, int c, float x, float y) {
    const float* plane = textures[l].data() + static_cast<size_t>(c) * ch * cw;
    const auto b = detail::make_bilinear_coeff(x + static_cast<float>(margin),
                                               y + static_cast<float>(margin));
    return detail::sample_plane(plane, cw, ch, b, 0, 0);
  };

  SyntheticSample s;
  s.im1 = Tensor4(1, 3, h, w);
  s.im2 = Tensor4(1, 3, h, w);
  s.gt_flow = Tensor4(1, 2, h, w);
  s.gt_occ = Tensor4(1, 1, h, w);

  // Frame 2: back-to-front composite, each layer's texture moved by its
  // translation.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = top_layer_im2(x, y);
      for (int c = 0; c < 3; ++c)
        s.im2.at(0, c, y, x) = texture_at(l, c, static_cast<float>(x) - spec.layers[l].tx,
                                          static_cast<float>(y) - spec.layers[l].ty);
    }
  }

  // Ground truth + occlusion + frame 1.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = top_layer_im1(x, y);
      const float tx = spec.layers[l].tx, ty = spec.layers[l].ty;
      s.gt_flow.at(0, 0, y, x) = tx;
      s.gt_flow.at(0, 1, y, x) = ty;

      const float sx = static_cast<float>(x) + tx;
      const float sy = static_cast<float>(y) + ty;
      bool occluded = sx < 0.0f || sx > static_cast<float>(w - 1) || sy < 0.0f ||
                      sy > static_cast<float>(h - 1);
      if (!occluded) {
        // Any positively-weighted support pixel showing another layer breaks
        // the match.
        const auto b = detail::make_bilinear_coeff(sx, sy);
        const float ws[4] = {b.w00, b.w01, b.w10, b.w11};
        const int cxs[4] = {b.x0, b.x0 + 1, b.x0, b.x0 + 1};
        const int cys[4] = {b.y0, b.y0, b.y0 + 1, b.y0 + 1};
        for (int k = 0; k < 4 && !occluded; ++k) {
          if (ws[k] <= 0.0f) continue;
          if (cxs[k] < 0 || cxs[k] >= w || cys[k] < 0 || cys[k] >= h) {
            occluded = true;
            break;
          }
          if (top_layer_im2(cxs[k], cys[k]) != l) occluded = true;
        }
      }
      s.gt_occ.at(0, 0, y, x) = occluded ? 1.0f : 0.0f;

      if (occluded) {
        for (int c = 0; c < 3; ++c)
          s.im1.at(0, c, y, x) =
              texture_at(l, c, static_cast<float>(x), static_cast<float>(y));
      } else {
        const auto b = detail::make_bilinear_coeff(sx, sy);
        for (int c = 0; c < 3; ++c)
          s.im1.at(0, c, y, x) = detail::sample_plane(s.im2.plane(0, c), w, h, b, 0, 0);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Random scene generation
// ---------------------------------------------------------------------------

struct SynthConfig {
  int height = 64, width = 64;
  float motion_max = 4.0f;
  int min_rects = 1, max_rects = 3;
  int rect_min = 10, rect_max = 26;
  int smooth_passes = 2;
  bool fractional_motion = true;

  /// Large motions with thin occluders: the regime where warping ghosts.
  static SynthConfig ghost_prone() {
    SynthConfig c;
    c.motion_max = 7.0f;
    c.min_rects = 2;
    c.max_rects = 3;
    c.rect_min = 5;
    c.rect_max = 12;
    return c;
  }
};

inline SyntheticSample gen_synthetic_pair(uint64_t seed, const SynthConfig& cfg = {}) {
  Rng rng(Rng::mix(seed, 0x5ce7e));
  SceneSpec spec;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.smooth_passes = cfg.smooth_passes;
  spec.texture_seed = rng.next_u64();

  auto motion = [&](Rng& r) {
    float t = static_cast<float>(r.uniform(-cfg.motion_max, cfg.motion_max));
    if (!cfg.fractional_motion) t = std::round(t);
    return t;
  };

  SceneLayer bg;
  bg.x1 = static_cast<float>(cfg.width - 1);
  bg.y1 = static_cast<float>(cfg.height - 1);
  bg.tx = motion(rng);
  bg.ty = motion(rng);
  spec.layers.push_back(bg);

  const int n_rects = static_cast<int>(rng.randint(cfg.min_rects, cfg.max_rects));
  for (int i = 0; i < n_rects; ++i) {
    SceneLayer r;
    const int rw = static_cast<int>(rng.randint(cfg.rect_min, cfg.rect_max));
    const int rh = static_cast<int>(rng.randint(cfg.rect_min, cfg.rect_max));
    r.x0 = static_cast<float>(rng.randint(0, std::max(0, cfg.width - rw - 1)));
    r.y0 = static_cast<float>(rng.randint(0, std::max(0, cfg.height - rh - 1)));
    r.x1 = r.x0 + static_cast<float>(rw - 1);
    r.y1 = r.y0 + static_cast<float>(rh - 1);
    r.tx = motion(rng);
    r.ty = motion(rng);
    spec.layers.push_back(r);
  }
  return render_scene(spec);
}

// ---------------------------------------------------------------------------
// Exact augmentation: crop + horizontal flip
// ---------------------------------------------------------------------------

/// Crops all fields; pixels whose target leaves the crop window become
/// occluded (content exists in the full frame but not in the cropped one).
inline SyntheticSample crop_sample(const SyntheticSample& s, int oy, int ox, int h, int w) {
  if (oy < 0 || ox < 0 || oy + h > s.im1.h || ox + w > s.im1.w)
    throw ShapeError("crop_sample: window " + std::to_string(h) + "x" + std::to_string(w) +
                     "+" + std::to_string(oy) + "+" + std::to_string(ox) +
                     " outside sample " + s.im1.shape_str());
  SyntheticSample out;
  auto crop = [&](const Tensor4& t) {
    Tensor4 r(1, t.c, h, w);
    for (int c = 0; c < t.c; ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(r.plane(0, c) + static_cast<int64_t>(y) * w,
                    t.plane(0, c) + static_cast<int64_t>(y + oy) * t.w + ox,
                    sizeof(float) * w);
    return r;
  };
  out.im1 = crop(s.im1);
  out.im2 = crop(s.im2);
  out.gt_flow = crop(s.gt_flow);
  out.gt_occ = crop(s.gt_occ);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float sx = static_cast<float>(x) + out.gt_flow.at(0, 0, y, x);
      const float sy = static_cast<float>(y) + out.gt_flow.at(0, 1, y, x);
      if (sx < 0.0f || sx > static_cast<float>(w - 1) || sy < 0.0f ||
          sy > static_cast<float>(h - 1))
        out.gt_occ.at(0, 0, y, x) = 1.0f;
    }
  }
  return out;
}

inline SyntheticSample hflip_sample(const SyntheticSample& s) {
  SyntheticSample out;
  auto flip = [&](const Tensor4& t) {
    Tensor4 r(1, t.c, t.h, t.w);
    for (int c = 0; c < t.c; ++c)
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) r.at(0, c, y, x) = t.at(0, c, y, t.w - 1 - x);
    return r;
  };
  out.im1 = flip(s.im1);
  out.im2 = flip(s.im2);
  out.gt_flow = flip(s.gt_flow);
  out.gt_occ = flip(s.gt_occ);
  float* u = out.gt_flow.plane(0, 0);
  for (int64_t i = 0; i < static_cast<int64_t>(s.im1.h) * s.im1.w; ++i) u[i] = -u[i];
  return out;
}

}  // namespace oasflow
