#pragma once

#include "oasflow/tensor.hpp"

namespace oasflow {

/// Adam with bias correction; moment buffers persist across steps, keyed by
/// parameter index in the store.
class Adam {
 public:
  explicit Adam(float lr = 1e-4f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  int step_count() const { return t_; }
  float learning_rate() const { return lr_; }
  void set_learning_rate(float lr) { lr_ = lr; }

  void step(ParamStore& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].value.numel(), 0.0f);
        v_[i].assign(params[i].value.numel(), 0.0f);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Param& p = params[i];
      float* m = m_[i].data();
      float* v = v_[i].data();
      const float* g = p.grad.data.data();
      float* w = p.value.data.data();
      const int64_t len = p.value.numel();
      for (int64_t j = 0; j < len; ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<float>(mj);
        v[j] = static_cast<float>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        w[j] = static_cast<float>(static_cast<double>(w[j]) -
                                  static_cast<double>(lr_) * mhat /
                                      (std::sqrt(vhat) + static_cast<double>(eps_)));
      }
    }
  }

 private:
  float lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace oasflow
