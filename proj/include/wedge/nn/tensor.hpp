#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "wedge/error.hpp"

namespace wedge::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Batch of feature maps stored channels x (batch * height * width).
/// Column `(n * height + y) * width + x` is the channel vector of pixel
/// (x, y) in sample n.
template <typename Scalar>
struct Tensor {
  Matrix<Scalar> data;
  int batch = 0;
  int height = 0;
  int width = 0;

  Tensor() = default;
  Tensor(int channels, int n, int h, int w)
      : data(Matrix<Scalar>::Zero(channels, Eigen::Index(n) * h * w)), batch(n), height(h), width(w) {}
  Tensor(Matrix<Scalar> d, int n, int h, int w) : data(std::move(d)), batch(n), height(h), width(w) {
    if (data.cols() != Eigen::Index(n) * h * w) throw ShapeError("tensor columns do not match batch*height*width");
  }

  int channels() const { return int(data.rows()); }
  Eigen::Index plane() const { return Eigen::Index(height) * width; }
  Eigen::Index column(int n, int y, int x) const { return (Eigen::Index(n) * height + y) * width + x; }
  bool same_shape(const Tensor& o) const {
    return data.rows() == o.data.rows() && batch == o.batch && height == o.height && width == o.width;
  }
};

/// A trainable parameter and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Non-trainable state that still belongs in a checkpoint (batch-norm
/// running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  Matrix<Scalar>* value = nullptr;
};

}  // namespace wedge::nn
