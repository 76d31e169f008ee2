#pragma once

#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "oasflow/common.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// Tensor4 — dense rank-4 NCHW float32 array, the universal value type.
// ---------------------------------------------------------------------------

struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  static Tensor4 full(int n, int c, int h, int w, float value) {
    Tensor4 t(n, c, h, w);
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  static Tensor4 zeros_like(const Tensor4& o) { return Tensor4(o.n, o.c, o.h, o.w); }

  int64_t numel() const { return static_cast<int64_t>(n) * c * h * w; }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  int64_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<int64_t>(in) * c + ic) * h + iy) * w + ix;
  }

  float& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
  float at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

  /// Pointer to the (n, c) plane, h*w contiguous floats.
  float* plane(int in, int ic) { return data.data() + index(in, ic, 0, 0); }
  const float* plane(int in, int ic) const { return data.data() + index(in, ic, 0, 0); }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
    return os.str();
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Tensor4 random_uniform(Rng& rng, int n, int c, int h, int w, float lo, float hi) {
  Tensor4 t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline Tensor4 random_normal(Rng& rng, int n, int c, int h, int w, float stddev) {
  Tensor4 t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

// ---------------------------------------------------------------------------
// Param — named trainable tensor with a paired gradient buffer.
// ---------------------------------------------------------------------------

struct Param {
  std::string name;
  Tensor4 value;
  Tensor4 grad;

  Param(std::string name_, Tensor4 value_)
      : name(std::move(name_)), value(std::move(value_)), grad(Tensor4::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0f); }
};

/// Ordered, stable-address collection of Params. Checkpoint order == insertion
/// order; the tape holds Param* across a training step.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor4 init) {
    if (by_name_.count(name))
      throw ContractError("ParamStore: duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Param>(name, std::move(init)));
    by_name_[name] = params_.back().get();
    return *params_.back();
  }

  Param* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  size_t size() const { return params_.size(); }
  Param& operator[](size_t i) { return *params_[i]; }
  const Param& operator[](size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  int64_t total_elements() const {
    int64_t total = 0;
    for (const auto& p : params_) total += p->value.numel();
    return total;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, Param*> by_name_;
};

}  // namespace oasflow
