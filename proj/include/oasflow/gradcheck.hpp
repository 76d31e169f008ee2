#pragma once

#include "oasflow/reference.hpp"
#include "oasflow/training.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Finite-difference verification of tape gradients.
//
// The analytic pass runs the float32 tape once; the numeric side perturbs
// each parameter element by +/- eps and re-evaluates a double-precision
// reference implementation of the same function (float32 FD deltas drown in
// rounding noise near the gradient floor). Elements where both gradients sit
// below grad_floor are skipped.
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;
  std::string worst;
};

template <typename BuildFn, typename EvalFn>
inline GradCheckResult finite_diff_check(std::vector<Param*> params, BuildFn build,
                                         EvalFn eval, double eps = 1e-3,
                                         double grad_floor = 1e-4) {
  GradCheckResult result;
  std::vector<Tensor4> analytic;
  {
    Tape tape;
    const Tape::Id loss = build(tape);
    for (Param* p : params) p->zero_grad();
    tape.backward(loss);
    for (Param* p : params) analytic.push_back(p->grad);
  }
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const float saved = p.value.data[i];
      p.value.data[i] = static_cast<float>(saved + eps);
      const double lp = eval();
      p.value.data[i] = static_cast<float>(saved - eps);
      const double lm = eval();
      p.value.data[i] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = static_cast<double>(analytic[pi].data[i]);
      const double mag = std::max(std::abs(an), std::abs(fd));
      if (mag <= grad_floor) {
        ++result.skipped;
        continue;
      }
      const double rel = std::abs(an - fd) / mag;
      ++result.checked;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reduced-model end-to-end check: a 2-level network on 8x8 synthetic crops,
// the full multi-scale loss (weight decay included) differentiated through
// the entire pipeline and swept parameter by parameter.
// ---------------------------------------------------------------------------

inline OasNetConfig reduced_net_config(CorrelationMode mode = CorrelationMode::kSampling,
                                       bool occlusion = true) {
  OasNetConfig cfg;
  cfg.encoder_channels = {8, 12};
  cfg.decoder_channels = {14, 12, 10};
  cfg.radius = 1;
  cfg.mode = mode;
  cfg.occlusion = occlusion;
  return cfg;
}

inline GradCheckResult reduced_model_gradcheck(uint64_t seed,
                                               CorrelationMode mode = CorrelationMode::kSampling,
                                               bool occlusion = true) {
  OasNet model(reduced_net_config(mode, occlusion), seed);
  SynthConfig synth;
  synth.height = 8;
  synth.width = 8;
  synth.motion_max = 1.0f;
  synth.rect_min = 3;
  synth.rect_max = 5;
  const SyntheticSample sample = gen_synthetic_pair(seed + 17, synth);

  LossConfig loss_cfg;
  loss_cfg.level_weights = {{2, 0.32f}};
  loss_cfg.weight_decay = 4e-4f;

  std::vector<Param*> params;
  for (auto& p : model.params()) params.push_back(p.get());

  auto build = [&](Tape& tape) {
    const auto fwd = model.forward(tape, tape.leaf(sample.im1), tape.leaf(sample.im2));
    return multiscale_l2_loss(tape, fwd.levels, sample.gt_flow, loss_cfg, &model.params());
  };
  const reference::ModelEvaluator ref(model);
  auto eval = [&] { return ref.loss(sample.im1, sample.im2, sample.gt_flow, loss_cfg); };
  return finite_diff_check(params, build, eval, 1e-3, 1e-4);
}

}  // namespace oasflow
