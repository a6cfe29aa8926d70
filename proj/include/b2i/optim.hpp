#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "b2i/error.hpp"
#include "b2i/tensor.hpp"

namespace b2i {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay and bias correction. Moments are created
/// lazily on the first step so the optimizer can be built before the model.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  /// Replaces the full state, e.g. when resuming from a checkpoint.
  void restore(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v,
               std::uint64_t t) {
    if (m.size() != v.size()) {
      throw ShapeError("adamw restore: moment lists differ in length");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].shape() != v[i].shape()) {
        throw ShapeError("adamw restore: moment shapes differ at slot " +
                         std::to_string(i));
      }
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

  void step(std::span<Tensor<T>* const> params,
            std::span<const Tensor<T>> grads, double lr) {
    if (params.size() != grads.size()) {
      throw ShapeError("adamw: " + std::to_string(grads.size()) +
                       " gradients for " + std::to_string(params.size()) +
                       " parameters");
    }
    if (!(lr >= 0.0)) throw ParameterError("adamw: negative learning rate");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_shape(grads[i], params[i]->shape(), "adamw gradient");
      if (!grads[i].all_finite()) {
        throw NumericError("adamw: non-finite gradient in parameter slot " +
                           std::to_string(i) + "; step aborted");
      }
    }
    if (m_.empty()) {
      for (const Tensor<T>* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    } else if (m_.size() != params.size()) {
      throw ShapeError("adamw: parameter count changed between steps");
    } else {
      for (std::size_t i = 0; i < params.size(); ++i)
        require_shape(m_[i], params[i]->shape(), "adamw state");
    }

    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      T* theta = params[p]->ptr();
      const T* g = grads[p].ptr();
      T* m = m_[p].ptr();
      T* v = v_[p].ptr();
      for (std::size_t i = 0; i < params[p]->size(); ++i) {
        m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
        v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        theta[i] = static_cast<T>(
            theta[i] - lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                             config_.weight_decay * theta[i]));
      }
    }
  }

 private:
  AdamWConfig config_{};
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t t_ = 0;
};

/// Linear warmup from 0 to the peak, then cosine decay to 0, per step.
class LrSchedule {
 public:
  LrSchedule(double peak_lr, std::uint64_t warmup_steps,
             std::uint64_t total_steps)
      : peak_(peak_lr), warmup_(warmup_steps), total_(total_steps) {
    if (!(peak_lr > 0.0)) throw ParameterError("peak learning rate must be > 0");
    if (warmup_steps == 0 || warmup_steps >= total_steps) {
      throw ParameterError("schedule needs 0 < warmup_steps (" +
                           std::to_string(warmup_steps) + ") < total_steps (" +
                           std::to_string(total_steps) + ")");
    }
  }

  double peak() const noexcept { return peak_; }
  std::uint64_t warmup_steps() const noexcept { return warmup_; }
  std::uint64_t total_steps() const noexcept { return total_; }

  /// Number of past calls that asked for a step beyond the end.
  std::uint64_t clamped_calls() const noexcept { return clamped_; }

  double lr_at(std::uint64_t step) const {
    if (step > total_) {
      if (clamped_++ == 0) {
        std::cerr << "warning: lr requested at step " << step
                  << " past total " << total_ << "; using 0\n";
      }
      return 0.0;
    }
    if (step <= warmup_) {
      return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
    }
    const double progress = static_cast<double>(step - warmup_) /
                            static_cast<double>(total_ - warmup_);
    return peak_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }

 private:
  double peak_;
  std::uint64_t warmup_;
  std::uint64_t total_;
  mutable std::uint64_t clamped_ = 0;
};

}  // namespace b2i
