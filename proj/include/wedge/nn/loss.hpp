#pragma once

#include <cmath>
#include <span>

#include "wedge/nn/tensor.hpp"

namespace wedge::nn {

/// Column-wise softmax of a classes x batch logit matrix, max-shifted.
template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    auto col = p.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return p;
}

template <typename Scalar>
struct LossResult {
  double loss = 0;         // mean over the batch
  Matrix<Scalar> grad;     // d loss / d logits, classes x batch
  int correct = 0;         // argmax hits
};

/// Mean softmax cross-entropy over a classes x batch logit matrix.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  if (Eigen::Index(labels.size()) != logits.cols()) throw ShapeError("label count does not match batch");
  LossResult<Scalar> r;
  r.grad = softmax_columns(logits);
  const Scalar inv_batch = Scalar(1) / Scalar(labels.size());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int y = labels[std::size_t(j)];
    if (y < 0 || y >= logits.rows()) throw ShapeError("label out of range");
    const Scalar max = logits.col(j).maxCoeff();
    const double lse = double(max) + std::log((logits.col(j).array() - max).exp().template cast<double>().sum());
    r.loss += lse - double(logits(y, j));
    Eigen::Index best;
    logits.col(j).maxCoeff(&best);
    if (best == y) ++r.correct;
    r.grad(y, j) -= Scalar(1);
  }
  r.loss /= double(labels.size());
  r.grad *= inv_batch;
  return r;
}

}  // namespace wedge::nn
