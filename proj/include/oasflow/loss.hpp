#pragma once

#include <map>

#include "oasflow/network.hpp"

namespace oasflow {

struct LossConfig {
  // Multi-scale weights, keyed by pyramid level.
  std::map<int, float> level_weights = {
      {6, 0.32f}, {5, 0.08f}, {4, 0.02f}, {3, 0.01f}, {2, 0.005f}};
  float weight_decay = 4e-4f;
};

/// Average-pool a full-resolution flow down to (h/f, w/f) and divide the
/// values by f, converting displacements into the coarse level's pixel units.
inline Tensor4 downscale_flow(const Tensor4& flow, int factor) {
  if (flow.h % factor || flow.w % factor)
    throw ShapeError("downscale_flow: dims " + std::to_string(flow.h) + "x" +
                     std::to_string(flow.w) + " not divisible by " + std::to_string(factor));
  Tensor4 out(flow.n, flow.c, flow.h / factor, flow.w / factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int in = 0; in < flow.n; ++in) {
    for (int c = 0; c < flow.c; ++c) {
      const float* src = flow.plane(in, c);
      float* dst = out.plane(in, c);
      for (int oy = 0; oy < out.h; ++oy) {
        for (int ox = 0; ox < out.w; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < factor; ++ky)
            for (int kx = 0; kx < factor; ++kx)
              acc += static_cast<double>(
                  src[static_cast<int64_t>(oy * factor + ky) * flow.w + ox * factor + kx]);
          dst[static_cast<int64_t>(oy) * out.w + ox] =
              static_cast<float>(acc * inv / static_cast<double>(factor));
        }
      }
    }
  }
  return out;
}

/// Multi-scale L2 loss: per level, the sum over pixels of the per-pixel L2
/// norm between the predicted flow and the downscaled ground truth, weighted
/// by the level coefficient, plus an L2 weight-decay term over all params.
inline Tape::Id multiscale_l2_loss(Tape& tape, const std::vector<LevelState>& levels,
                                   const Tensor4& gt_flow, const LossConfig& cfg,
                                   ParamStore* params = nullptr) {
  if (levels.empty()) throw ContractError("multiscale_l2_loss: no levels");
  bool any_positive = false;
  for (const auto& kv : cfg.level_weights) {
    if (kv.second < 0.0f)
      throw ContractError("multiscale_l2_loss: negative weight at level " +
                          std::to_string(kv.first));
    if (kv.second > 0.0f) any_positive = true;
  }
  if (!any_positive) throw ContractError("multiscale_l2_loss: all level weights are zero");

  Tape::Id total = tape.leaf(Tensor4(1, 1, 1, 1));
  for (const auto& ls : levels) {
    const auto it = cfg.level_weights.find(ls.level);
    const float alpha = it == cfg.level_weights.end() ? 0.0f : it->second;
    if (alpha == 0.0f) continue;
    const Tensor4& pred = tape.value(ls.flow);
    const int factor = 1 << ls.level;
    if (pred.h * factor != gt_flow.h || pred.w * factor != gt_flow.w)
      throw ShapeError("multiscale_l2_loss: level " + std::to_string(ls.level) +
                       " prediction " + pred.shape_str() + " inconsistent with ground truth " +
                       gt_flow.shape_str());
    const Tape::Id gt = tape.leaf(downscale_flow(gt_flow, factor));
    total = add(tape, total, scale(tape, l2_diff_sum(tape, ls.flow, gt), alpha));
  }
  if (params != nullptr && cfg.weight_decay > 0.0f) {
    std::vector<Param*> all;
    for (auto& p : *params) all.push_back(p.get());
    total = add(tape, total, scale(tape, l2_squared(tape, all), cfg.weight_decay));
  }
  return total;
}

/// Mean end-point error over (optionally masked) pixels.
inline float epe(const Tensor4& pred, const Tensor4& gt, const Tensor4* mask = nullptr) {
  if (!pred.same_shape(gt))
    throw ShapeError("epe: shapes " + pred.shape_str() + " vs " + gt.shape_str());
  if (pred.c != 2)
    throw ShapeError("epe: flow must have 2 channels, got " + std::to_string(pred.c) +
                     " (axis c)");
  if (mask != nullptr && (mask->n != pred.n || mask->h != pred.h || mask->w != pred.w))
    throw ShapeError("epe: mask " + mask->shape_str() + " does not match flow " +
                     pred.shape_str());
  double acc = 0.0;
  int64_t count = 0;
  const int64_t hw = static_cast<int64_t>(pred.h) * pred.w;
  for (int in = 0; in < pred.n; ++in) {
    const float* pu = pred.plane(in, 0);
    const float* pv = pred.plane(in, 1);
    const float* gu = gt.plane(in, 0);
    const float* gv = gt.plane(in, 1);
    const float* mp = mask ? mask->plane(in, 0) : nullptr;
    for (int64_t i = 0; i < hw; ++i) {
      if (mp != nullptr && mp[i] == 0.0f) continue;
      const double du = static_cast<double>(pu[i]) - static_cast<double>(gu[i]);
      const double dv = static_cast<double>(pv[i]) - static_cast<double>(gv[i]);
      acc += std::sqrt(du * du + dv * dv);
      ++count;
    }
  }
  if (count == 0) throw ContractError("epe: empty mask");
  return static_cast<float>(acc / static_cast<double>(count));
}

}  // namespace oasflow
