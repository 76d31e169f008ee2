#pragma once

#include <array>

#include "oasflow/occlusion.hpp"

namespace oasflow {

enum class CorrelationMode { kWarping, kSampling };

inline const char* to_string(CorrelationMode m) {
  return m == CorrelationMode::kWarping ? "warping" : "sampling";
}

struct OasNetConfig {
  std::vector<int> encoder_channels = {16, 32, 64, 96, 128, 160};
  std::vector<int> decoder_channels = {128, 128, 128, 128, 128, 96, 64, 32};
  int in_channels = 3;
  int radius = 4;
  bool occlusion = true;
  CorrelationMode mode = CorrelationMode::kSampling;

  int levels() const { return static_cast<int>(encoder_channels.size()); }
  int size_multiple() const { return 1 << levels(); }
  /// Channel count the shared decoder sees: cost volume + adapted feature + flow.
  int decoder_input_channels() const {
    const int win = 2 * radius + 1;
    return win * win + encoder_channels[1] + 2;
  }
};

struct ConvRef {
  Param* w = nullptr;
  Param* b = nullptr;
};

/// Flow + occlusion state at one pyramid level (tape nodes).
struct LevelState {
  int level = 0;
  Tape::Id flow = -1;
  Tape::Id occ = -1;
};

struct ForwardResult {
  Tape::Id final_flow = -1;                 // full resolution, pixel units
  std::vector<LevelState> levels;           // coarsest first (level L .. 2)
};

// ---------------------------------------------------------------------------
// OasNet — 6-level feature pyramid, one decoder shared across the 5
// estimation levels (parameter identity), occlusion-aware cost-volume fusion.
// Feature maps are projected to the level-2 width by per-level 1x1 adapters
// so the shared decoder input is always cost + feature + flow channels.
// ---------------------------------------------------------------------------

class OasNet {
 public:
  explicit OasNet(const OasNetConfig& cfg = {}, uint64_t seed = 0) : cfg_(cfg) {
    if (cfg_.levels() < 2)
      throw ContractError("OasNet: need at least 2 pyramid levels, got " +
                          std::to_string(cfg_.levels()));
    if (cfg_.decoder_channels.empty())
      throw ContractError("OasNet: decoder needs at least one trunk conv");
    Rng rng(seed);

    // Encoder: two 3x3 convs per level, the first at stride 2.
    int prev_c = cfg_.in_channels;
    for (int k = 1; k <= cfg_.levels(); ++k) {
      const int out_c = cfg_.encoder_channels[k - 1];
      const std::string base = "enc" + std::to_string(k);
      encoder_.push_back({make_conv(rng, base + ".conv1", prev_c, out_c, 3),
                          make_conv(rng, base + ".conv2", out_c, out_c, 3)});
      prev_c = out_c;
    }

    // Per-level 1x1 feature adapters down to the level-2 channel count.
    const int feat_c = cfg_.encoder_channels[1];
    adapters_.assign(cfg_.levels() + 1, ConvRef{});
    for (int k = 3; k <= cfg_.levels(); ++k) {
      adapters_[k] =
          make_conv(rng, "adapt" + std::to_string(k), cfg_.encoder_channels[k - 1], feat_c, 1);
    }

    // Shared decoder trunk + heads.
    int c = cfg_.decoder_input_channels();
    for (size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
      trunk_.push_back(
          make_conv(rng, "dec.trunk" + std::to_string(i + 1), c, cfg_.decoder_channels[i], 3));
      c = cfg_.decoder_channels[i];
    }
    flow_head_ = make_conv(rng, "dec.flow_head", c, 2, 3);
    occ_head_ = make_conv(rng, "dec.occ_head", c, 1, 3);

    const int cost_c = spec().channels();
    if (cfg_.occlusion) {
      oa_.conv1_w = make_conv(rng, "dec.oa.conv1", cost_c, cost_c, 3).w;
      oa_.conv1_b = params_.find("dec.oa.conv1.b");
      oa_.conv2_w = make_conv(rng, "dec.oa.conv2", cost_c, cost_c, 3).w;
      oa_.conv2_b = params_.find("dec.oa.conv2.b");
    } else {
      bypass_ = make_conv(rng, "dec.oa.bypass", cost_c, cost_c, 3);
    }
  }

  const OasNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  SearchSpec spec() const { return SearchSpec{cfg_.radius, true}; }

  ConvRef flow_head() { return flow_head_; }
  ConvRef occ_head() { return occ_head_; }
  OcclusionParams occlusion_params() { return oa_; }
  ConvRef trunk_conv(int i) { return trunk_[i]; }

  /// Sum of parameter element counts; the shared decoder counts once.
  int64_t count_parameters() const { return params_.total_elements(); }

  /// Features f^1..f^L, halving resolution per level; leaky ReLU after every
  /// conv. Input dims must be divisible by 2^L.
  std::vector<Tape::Id> extract_pyramid(Tape& tape, Tape::Id image) {
    const Tensor4& im = tape.value(image);
    const int mult = cfg_.size_multiple();
    if (im.h % mult || im.w % mult)
      throw ShapeError("extract_pyramid: input " + std::to_string(im.h) + "x" +
                       std::to_string(im.w) + " must be divisible by " + std::to_string(mult));
    if (im.c != cfg_.in_channels)
      throw ShapeError("extract_pyramid: input channels " + std::to_string(im.c) + " != " +
                       std::to_string(cfg_.in_channels) + " (axis c)");
    std::vector<Tape::Id> feats;
    Tape::Id cur = image;
    for (const auto& level : encoder_) {
      cur = leaky_relu(tape, conv2d(tape, cur, *level[0].w, *level[0].b, 2, 1), kLeakySlope);
      cur = leaky_relu(tape, conv2d(tape, cur, *level[1].w, *level[1].b, 1, 1), kLeakySlope);
      feats.push_back(cur);
    }
    return feats;
  }

  /// One estimation level: build the (occlusion-aware) cost volume around the
  /// upsampled previous flow, then refine a residual with the shared decoder.
  LevelState decode_level(Tape& tape, int level, Tape::Id f1_k, Tape::Id f2_k,
                          const LevelState* prev) {
    const Tensor4& f1v = tape.value(f1_k);
    Tape::Id flow0, occ0;
    if (prev == nullptr) {
      flow0 = tape.leaf(Tensor4(f1v.n, 2, f1v.h, f1v.w));
      occ0 = tape.leaf(Tensor4::full(f1v.n, 1, f1v.h, f1v.w, 0.5f));
    } else {
      const Tensor4& pf = tape.value(prev->flow);
      if (pf.h * 2 != f1v.h || pf.w * 2 != f1v.w)
        throw ShapeError("decode_level: previous level " + std::to_string(pf.h) + "x" +
                         std::to_string(pf.w) + " is not half of " + std::to_string(f1v.h) +
                         "x" + std::to_string(f1v.w) + " (axis h/w)");
      flow0 = upsample_bilinear_2x(tape, prev->flow, 2.0f);
      occ0 = upsample_bilinear_2x(tape, prev->occ, 1.0f);
    }

    const SearchSpec sp = spec();
    const CostVolume raw = cfg_.mode == CorrelationMode::kSampling
                               ? cost_volume_sampling(tape, f1_k, f2_k, flow0, sp)
                               : cost_volume_warping(tape, f1_k, f2_k, flow0, sp);
    Tape::Id cost;
    if (cfg_.occlusion) {
      cost = occlusion_aware_volume(tape, raw, occ0, oa_).costs;
    } else {
      cost = leaky_relu(tape, conv2d(tape, raw.costs, *bypass_.w, *bypass_.b, 1, 1),
                        kLeakySlope);
    }

    Tape::Id feat = f1_k;
    if (adapters_[level].w != nullptr)
      feat = conv2d(tape, f1_k, *adapters_[level].w, *adapters_[level].b, 1, 0);

    Tape::Id x = concat_channels(tape, {cost, feat, flow0});
    for (const auto& conv : trunk_)
      x = leaky_relu(tape, conv2d(tape, x, *conv.w, *conv.b, 1, 1), kLeakySlope);

    const Tape::Id residual = conv2d(tape, x, *flow_head_.w, *flow_head_.b, 1, 1);
    const Tape::Id flow = add(tape, flow0, residual);
    const Tape::Id occ = sigmoid(tape, conv2d(tape, x, *occ_head_.w, *occ_head_.b, 1, 1));
    return LevelState{level, flow, occ};
  }

  /// Full coarse-to-fine pass: decode levels L..2, then upsample the level-2
  /// flow by 4 back to input resolution.
  ForwardResult forward(Tape& tape, Tape::Id im1, Tape::Id im2) {
    const Tensor4& a = tape.value(im1);
    const Tensor4& b = tape.value(im2);
    if (!a.same_shape(b))
      throw ShapeError("forward: image shapes " + a.shape_str() + " vs " + b.shape_str());
    const auto p1 = extract_pyramid(tape, im1);
    const auto p2 = extract_pyramid(tape, im2);

    ForwardResult result;
    const LevelState* prev = nullptr;
    for (int level = cfg_.levels(); level >= 2; --level) {
      result.levels.push_back(
          decode_level(tape, level, p1[level - 1], p2[level - 1], prev));
      prev = &result.levels.back();
    }
    Tape::Id flow = result.levels.back().flow;
    flow = upsample_bilinear_2x(tape, flow, 2.0f);
    flow = upsample_bilinear_2x(tape, flow, 2.0f);
    result.final_flow = flow;
    return result;
  }

  /// Convenience inference: plain tensors in, plain tensors out.
  struct Estimate {
    Tensor4 flow;                    // input resolution
    std::vector<Tensor4> occ_pyramid;  // coarsest first
    std::vector<Tensor4> level_flows;  // coarsest first, level pixel units
  };

  Estimate estimate_flow(const Tensor4& im1, const Tensor4& im2) {
    Tape tape;
    const auto result = forward(tape, tape.leaf(im1), tape.leaf(im2));
    Estimate est;
    est.flow = tape.value(result.final_flow);
    for (const auto& ls : result.levels) {
      est.occ_pyramid.push_back(tape.value(ls.occ));
      est.level_flows.push_back(tape.value(ls.flow));
    }
    return est;
  }

 private:
  ConvRef make_conv(Rng& rng, const std::string& name, int in_c, int out_c, int k) {
    const int fan_in = in_c * k * k;
    const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
    ConvRef ref;
    ref.w = &params_.add(name + ".w", random_normal(rng, out_c, in_c, k, k, stddev));
    ref.b = &params_.add(name + ".b", Tensor4(1, out_c, 1, 1));
    return ref;
  }

  OasNetConfig cfg_;
  ParamStore params_;
  std::vector<std::array<ConvRef, 2>> encoder_;
  std::vector<ConvRef> adapters_;  // indexed by level; empty ref = identity
  std::vector<ConvRef> trunk_;
  ConvRef flow_head_, occ_head_;
  OcclusionParams oa_;
  ConvRef bypass_;
};

}  // namespace oasflow
