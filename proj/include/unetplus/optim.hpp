#pragma once

#include <cmath>
#include <vector>

#include "unetplus/model.hpp"

namespace unetplus {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
  }
};

// Bias-corrected Adam over a fixed list of parameter tensors.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }

  // `params[i]` is updated in place from `grads[i]`.
  void step(std::vector<NamedArray<T>>& params, const std::vector<const Tensor<T>*>& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto data = params[i].value.data();
      const auto g = grads[i]->data();
      if (g.size() != data.size() || m_[i].size() != data.size()) {
        throw ShapeError("adam: gradient shape mismatch for '" + params[i].name + "'");
      }
      if (cfg_.lr == 0.0) continue;
      for (std::size_t k = 0; k < data.size(); ++k) {
        const double gk = g[k];
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * gk;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * gk * gk;
        const double update = cfg_.lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + cfg_.eps);
        data[k] = static_cast<T>(data[k] - update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace unetplus
