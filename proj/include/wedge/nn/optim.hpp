#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "wedge/nn/tensor.hpp"

namespace wedge::nn {

/// Per-epoch cosine decay from `lr_max` at epoch 0 to `lr_min` at the last
/// epoch (`epochs - 1`). A single epoch runs at `lr_max`.
inline double cosine_lr(int epoch, int epochs, double lr_max, double lr_min) {
  if (epochs <= 1) return lr_max;
  const double t = double(epoch) / double(epochs - 1);
  return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam with decoupled weight decay: p <- p * (1 - lr*wd), then the
/// bias-corrected Adam step.
template <typename Scalar>
class AdamW {
 public:
  AdamW(std::vector<Parameter<Scalar>*> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    const Scalar b1 = Scalar(opt_.beta1), b2 = Scalar(opt_.beta2);
    const Scalar step = Scalar(lr / bc1);
    const Scalar sqrt_bc2 = Scalar(std::sqrt(bc2));
    const Scalar decay = Scalar(1.0 - lr * opt_.weight_decay);
    const Scalar eps = Scalar(opt_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      p.value *= decay;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamWOptions opt_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace wedge::nn
