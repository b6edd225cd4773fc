#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "idal/errors.hpp"
#include "idal/models.hpp"
#include "idal/tensor.hpp"

namespace idal {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("adamw: learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adamw: betas must lie in [0, 1)");
    }
    if (weight_decay < 0.0) throw ConfigError("adamw: weight decay must be >= 0");
  }
};

// AdamW with decoupled weight decay and bias correction. Owns first/second
// moment buffers per tracked parameter.
class AdamW {
 public:
  explicit AdamW(NamedParams params) : params_(std::move(params)) {
    for (const auto& [name, tensor] : params_) {
      m_.emplace_back(tensor.size(), 0.0);
      v_.emplace_back(tensor.size(), 0.0);
    }
  }

  void step(const AdamWConfig& config) {
    config.validate();
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& [name, tensor] = params_[p];
      const auto& grad = tensor.grad();
      auto& values = tensor.mutable_values();
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g)) {
          throw NumericError("adamw: non-finite gradient in parameter " + name);
        }
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
        values[i] -= config.learning_rate * config.weight_decay * values[i];
      }
    }
  }

  void zero_grad() {
    for (auto& [name, tensor] : params_) tensor.zero_grad();
  }

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }

  const NamedParams& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }

 private:
  NamedParams params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_count_ = 0;
};

}  // namespace idal
