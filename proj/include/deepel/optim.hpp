// Parameter blocks and first-order optimizers driven by tape gradients.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "deepel/autodiff.hpp"

namespace deepel {

/// Views onto a model's trainable storage, in a fixed order.
using ParamBlocks = std::vector<std::span<double>>;

/// Plain stochastic gradient descent. Blocks that did not take part in the
/// tape are left untouched.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void Step(const ParamBlocks& blocks, const Tape& tape) {
    for (auto block : blocks) {
      auto g = tape.GradOf(block.data());
      if (g.empty()) continue;
      for (std::size_t i = 0; i < block.size(); ++i) block[i] -= lr_ * g[i];
    }
  }

 private:
  double lr_;
};

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void Step(const ParamBlocks& blocks, const Tape& tape) {
    if (m_.empty()) {
      for (auto b : blocks) {
        m_.emplace_back(b.size(), 0.0);
        v_.emplace_back(b.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      auto g = tape.GradOf(blocks[k].data());
      if (g.empty()) continue;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        blocks[k][i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace deepel
