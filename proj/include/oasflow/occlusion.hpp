#pragma once

#include "oasflow/correlation.hpp"

namespace oasflow {

inline constexpr float kLeakySlope = 0.1f;

/// The two disparate 3x3 filters of the occlusion-aware fusion, channel
/// preserving over the cost volume.
struct OcclusionParams {
  Param* conv1_w = nullptr;
  Param* conv1_b = nullptr;
  Param* conv2_w = nullptr;
  Param* conv2_b = nullptr;
};

// ---------------------------------------------------------------------------
// occlusion_aware_volume — the four fusion steps, literally:
//   1. reversed map = 1 - occ
//   2. two branch volumes occ (x) c and (1 - occ) (x) c (channel broadcast)
//   3. conv1 on the occ branch, conv2 on the reversed branch (3x3, pad 1)
//   4. elementwise sum, then leaky ReLU
// ---------------------------------------------------------------------------

inline CostVolume occlusion_aware_volume(Tape& tape, const CostVolume& c, Tape::Id occ,
                                         const OcclusionParams& params) {
  const Tensor4& vol = tape.value(c.costs);
  const Tensor4& map = tape.value(occ);
  if (map.c != 1)
    throw ShapeError("occlusion_aware_volume: occlusion map must have 1 channel, got " +
                     std::to_string(map.c) + " (axis c)");
  if (map.n != vol.n || map.h != vol.h || map.w != vol.w)
    throw ShapeError("occlusion_aware_volume: map " + map.shape_str() +
                     " does not match cost volume " + vol.shape_str());
  if (params.conv1_w->value.c != vol.c || params.conv2_w->value.c != vol.c)
    throw ShapeError("occlusion_aware_volume: filter in_c " +
                     std::to_string(params.conv1_w->value.c) + " != cost channels " +
                     std::to_string(vol.c) + " (axis c)");

  const Tape::Id reversed = one_minus(tape, occ);
  const Tape::Id branch_occ = mul_broadcast(tape, c.costs, occ);
  const Tape::Id branch_rev = mul_broadcast(tape, c.costs, reversed);
  const Tape::Id filtered_occ =
      conv2d(tape, branch_occ, *params.conv1_w, *params.conv1_b, 1, 1);
  const Tape::Id filtered_rev =
      conv2d(tape, branch_rev, *params.conv2_w, *params.conv2_b, 1, 1);
  const Tape::Id fused = leaky_relu(tape, add(tape, filtered_occ, filtered_rev), kLeakySlope);
  return CostVolume{fused, c.spec};
}

}  // namespace oasflow
