#pragma once

#include <algorithm>
#include <chrono>

#include "oasflow/loss.hpp"
#include "oasflow/optim.hpp"
#include "oasflow/synthetic.hpp"

namespace oasflow {

struct TrainConfig {
  int steps = 2000;
  int batch = 2;
  float lr = 1e-4f;
  float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  uint64_t seed = 1;
  int crop_h = 64, crop_w = 64;
  CorrelationMode mode = CorrelationMode::kSampling;
  bool occlusion = true;
  SynthConfig synth;
  LossConfig loss;
  int val_every = 100;
  int val_size = 8;
  bool augment = true;

  void validate() const {
    OasNetConfig net;
    const int mult = net.size_multiple();
    if (crop_h % mult || crop_w % mult)
      throw ShapeError("TrainConfig: crop " + std::to_string(crop_h) + "x" +
                       std::to_string(crop_w) + " must be divisible by " +
                       std::to_string(mult));
    if (batch < 1) throw ContractError("TrainConfig: batch must be >= 1");
    if (steps < 0) throw ContractError("TrainConfig: steps must be >= 0");
  }
};

struct TrainRecord {
  int step = 0;
  float loss = 0.0f;
  float val_epe = 0.0f;
  int64_t wall_ms = 0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  float final_val_epe = 0.0f;
  float baseline_epe = 0.0f;  // zero-flow EPE on the held-out set
  float occ_corr = 0.0f;      // point-biserial corr of occ map vs gt occlusion
  uint64_t first_batch_hash = 0;
  int64_t total_wall_ms = 0;
};

namespace detail {

inline uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t hash_tensor(uint64_t h, const Tensor4& t) {
  return fnv1a(h, t.data.data(), t.data.size() * sizeof(float));
}

struct Batch {
  Tensor4 im1, im2, gt_flow, gt_occ;
};

inline Batch stack_samples(const std::vector<SyntheticSample>& samples) {
  const int B = static_cast<int>(samples.size());
  const Tensor4& ref = samples[0].im1;
  Batch b;
  b.im1 = Tensor4(B, 3, ref.h, ref.w);
  b.im2 = Tensor4(B, 3, ref.h, ref.w);
  b.gt_flow = Tensor4(B, 2, ref.h, ref.w);
  b.gt_occ = Tensor4(B, 1, ref.h, ref.w);
  const int64_t hw = static_cast<int64_t>(ref.h) * ref.w;
  for (int i = 0; i < B; ++i) {
    std::memcpy(b.im1.plane(i, 0), samples[i].im1.data.data(), sizeof(float) * hw * 3);
    std::memcpy(b.im2.plane(i, 0), samples[i].im2.data.data(), sizeof(float) * hw * 3);
    std::memcpy(b.gt_flow.plane(i, 0), samples[i].gt_flow.data.data(), sizeof(float) * hw * 2);
    std::memcpy(b.gt_occ.plane(i, 0), samples[i].gt_occ.data.data(), sizeof(float) * hw);
  }
  return b;
}

inline SyntheticSample make_train_sample(const TrainConfig& cfg, uint64_t index) {
  SynthConfig gen = cfg.synth;
  gen.height = cfg.crop_h;
  gen.width = cfg.crop_w;
  if (!cfg.augment) return gen_synthetic_pair(Rng::mix(cfg.seed, 0xda7a0 + index), gen);
  const int pad = 16;
  gen.height = cfg.crop_h + pad;
  gen.width = cfg.crop_w + pad;
  SyntheticSample s = gen_synthetic_pair(Rng::mix(cfg.seed, 0xda7a0 + index), gen);
  Rng aug(Rng::mix(cfg.seed, 0xa060 + index));
  const int oy = static_cast<int>(aug.randint(0, pad));
  const int ox = static_cast<int>(aug.randint(0, pad));
  s = crop_sample(s, oy, ox, cfg.crop_h, cfg.crop_w);
  if (aug.uniform() < 0.5) s = hflip_sample(s);
  return s;
}

inline std::vector<SyntheticSample> make_val_set(const TrainConfig& cfg) {
  SynthConfig gen = cfg.synth;
  gen.height = cfg.crop_h;
  gen.width = cfg.crop_w;
  std::vector<SyntheticSample> vals;
  for (int i = 0; i < cfg.val_size; ++i)
    vals.push_back(gen_synthetic_pair(Rng::mix(cfg.seed, 0x7a1e + i), gen));
  return vals;
}

inline float validation_epe(OasNet& model, const std::vector<SyntheticSample>& vals) {
  double acc = 0.0;
  for (const auto& s : vals) {
    const auto est = model.estimate_flow(s.im1, s.im2);
    acc += static_cast<double>(epe(est.flow, s.gt_flow));
  }
  return static_cast<float>(acc / static_cast<double>(vals.size()));
}

/// Point-biserial correlation between the level-2 occlusion map and the
/// pooled, binarized ground-truth occlusion over the validation set.
inline float occlusion_correlation(OasNet& model, const std::vector<SyntheticSample>& vals) {
  std::vector<float> pred;
  std::vector<int> label;
  for (const auto& s : vals) {
    const auto est = model.estimate_flow(s.im1, s.im2);
    const Tensor4& occ = est.occ_pyramid.back();  // level 2
    const int factor = s.gt_occ.h / occ.h;
    for (int y = 0; y < occ.h; ++y) {
      for (int x = 0; x < occ.w; ++x) {
        double m = 0.0;
        for (int ky = 0; ky < factor; ++ky)
          for (int kx = 0; kx < factor; ++kx)
            m += s.gt_occ.at(0, 0, y * factor + ky, x * factor + kx);
        pred.push_back(occ.at(0, 0, y, x));
        label.push_back(m / (factor * factor) > 0.5 ? 1 : 0);
      }
    }
  }
  int64_t n1 = 0;
  for (int v : label) n1 += v;
  const int64_t n = static_cast<int64_t>(label.size());
  if (n1 == 0 || n1 == n) return 0.0f;
  double m1 = 0.0, m0 = 0.0, mean = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    mean += pred[i];
    (label[i] ? m1 : m0) += pred[i];
  }
  mean /= static_cast<double>(n);
  m1 /= static_cast<double>(n1);
  m0 /= static_cast<double>(n - n1);
  double var = 0.0;
  for (float v : pred) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < 1e-12) return 0.0f;
  const double p = static_cast<double>(n1) / static_cast<double>(n);
  return static_cast<float>((m1 - m0) / sd * std::sqrt(p * (1.0 - p)));
}

}  // namespace detail

inline OasNet build_model(const TrainConfig& cfg) {
  OasNetConfig net;
  net.mode = cfg.mode;
  net.occlusion = cfg.occlusion;
  return OasNet(net, Rng::mix(cfg.seed, 0x1417));
}

// ---------------------------------------------------------------------------
// train_toy — generate / forward / loss / backward / Adam, validation every
// val_every steps, fully deterministic in the seed.
// ---------------------------------------------------------------------------

inline TrainReport train_toy(const TrainConfig& cfg, OasNet& model) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  const auto vals = detail::make_val_set(cfg);
  TrainReport report;
  {
    Tensor4 zeros;
    double acc = 0.0;
    for (const auto& s : vals) {
      zeros = Tensor4::zeros_like(s.gt_flow);
      acc += static_cast<double>(epe(zeros, s.gt_flow));
    }
    report.baseline_epe = static_cast<float>(acc / static_cast<double>(vals.size()));
  }

  Adam opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  float val = detail::validation_epe(model, vals);
  report.records.push_back(TrainRecord{0, 0.0f, val, wall_ms()});

  float last_loss = 0.0f;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<SyntheticSample> samples;
    for (int j = 0; j < cfg.batch; ++j)
      samples.push_back(detail::make_train_sample(
          cfg, static_cast<uint64_t>(step - 1) * cfg.batch + j));
    const auto batch = detail::stack_samples(samples);
    if (step == 1) {
      uint64_t h = 0xcbf29ce484222325ULL;
      h = detail::hash_tensor(h, batch.im1);
      h = detail::hash_tensor(h, batch.im2);
      h = detail::hash_tensor(h, batch.gt_flow);
      report.first_batch_hash = h;
    }

    Tape tape;
    const auto fwd = model.forward(tape, tape.leaf(batch.im1), tape.leaf(batch.im2));
    const Tape::Id loss =
        multiscale_l2_loss(tape, fwd.levels, batch.gt_flow, cfg.loss, &model.params());
    last_loss = tape.value(loss).data[0];
    if (!std::isfinite(last_loss))
      throw ContractError("train_toy: diverged at step " + std::to_string(step) +
                          " (loss is not finite)");
    model.params().zero_grads();
    tape.backward(loss);
    opt.step(model.params());

    if (step % cfg.val_every == 0 || step == cfg.steps) {
      val = detail::validation_epe(model, vals);
      report.records.push_back(TrainRecord{step, last_loss, val, wall_ms()});
    }
  }

  report.final_val_epe = report.records.back().val_epe;
  report.occ_corr = detail::occlusion_correlation(model, vals);
  report.total_wall_ms = wall_ms();
  return report;
}

// ---------------------------------------------------------------------------
// run_ablation — the 2x2 grid {warping, sampling} x {occlusion off, on} with
// identical data streams per seed.
// ---------------------------------------------------------------------------

struct AblationRow {
  CorrelationMode mode;
  bool occlusion;
  uint64_t seed;
  float val_epe;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  /// Median validation EPE per cell, Table-1 row order:
  /// warping/off, warping/on, sampling/off, sampling/on.
  float median_epe[4] = {0, 0, 0, 0};

  static int cell_index(CorrelationMode m, bool occ) {
    return (m == CorrelationMode::kSampling ? 2 : 0) + (occ ? 1 : 0);
  }
};

inline AblationReport run_ablation(const TrainConfig& base, int n_seeds) {
  AblationReport report;
  std::vector<std::vector<float>> cell_epes(4);
  for (int si = 0; si < n_seeds; ++si) {
    uint64_t hash = 0;
    bool first = true;
    for (const auto mode : {CorrelationMode::kWarping, CorrelationMode::kSampling}) {
      for (const bool occ : {false, true}) {
        TrainConfig cfg = base;
        cfg.mode = mode;
        cfg.occlusion = occ;
        cfg.seed = base.seed + static_cast<uint64_t>(si);
        OasNet model = build_model(cfg);
        const TrainReport r = train_toy(cfg, model);
        if (first) {
          hash = r.first_batch_hash;
          first = false;
        } else if (r.first_batch_hash != hash) {
          throw ContractError("run_ablation: data streams diverged across cells at seed " +
                              std::to_string(cfg.seed));
        }
        report.rows.push_back(AblationRow{mode, occ, cfg.seed, r.final_val_epe});
        cell_epes[AblationReport::cell_index(mode, occ)].push_back(r.final_val_epe);
      }
    }
  }
  for (int i = 0; i < 4; ++i) {
    auto v = cell_epes[i];
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    report.median_epe[i] = n == 0 ? 0.0f
                                  : (n % 2 ? v[n / 2] : 0.5f * (v[n / 2 - 1] + v[n / 2]));
  }
  return report;
}

}  // namespace oasflow
