#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "wedge/nn/tensor.hpp"
#include "wedge/rng.hpp"

namespace wedge::nn {

/// A differentiable stage. `forward` is const and cache-free, so a trained
/// network can serve concurrent inference; `forward_train` keeps whatever
/// `backward` needs and updates running statistics.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x) const = 0;
  virtual Tensor<Scalar> forward_train(const Tensor<Scalar>& x) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad) = 0;

  virtual void init(Rng&) {}
  virtual void collect(const std::string&, std::vector<Parameter<Scalar>*>&) {}
  virtual void collect_buffers(const std::string&, std::vector<Buffer<Scalar>>&) {}
  /// Drops training caches.
  virtual void release() {}
};

namespace detail {

inline int conv_out(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

// Rows of `cols` are ordered (group, ky, kx, channel-in-group) so every
// group's patch block is contiguous and copies run over contiguous channels.
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, int kernel, int stride, int pad, int groups, int out_h, int out_w,
            Matrix<Scalar>& cols) {
  const int cg = x.channels() / groups;
  const Eigen::Index rows = Eigen::Index(kernel) * kernel * x.channels();
  cols.resize(rows, Eigen::Index(x.batch) * out_h * out_w);
  const Scalar* src = x.data.data();
  const Eigen::Index cin = x.channels();
  for (int n = 0; n < x.batch; ++n) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        Scalar* dst = cols.data() + ((Eigen::Index(n) * out_h + oy) * out_w + ox) * rows;
        for (int g = 0; g < groups; ++g) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            for (int kx = 0; kx < kernel; ++kx, dst += cg) {
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= x.height || ix >= x.width) {
                std::fill(dst, dst + cg, Scalar(0));
              } else {
                const Scalar* p = src + x.column(n, iy, ix) * cin + Eigen::Index(g) * cg;
                std::copy(p, p + cg, dst);
              }
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, int kernel, int stride, int pad, int groups, int out_h, int out_w,
            Tensor<Scalar>& dx) {
  dx.data.setZero();
  const int cg = dx.channels() / groups;
  const Eigen::Index rows = cols.rows();
  const Eigen::Index cin = dx.channels();
  Scalar* dst_base = dx.data.data();
  for (int n = 0; n < dx.batch; ++n) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Scalar* src = cols.data() + ((Eigen::Index(n) * out_h + oy) * out_w + ox) * rows;
        for (int g = 0; g < groups; ++g) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            for (int kx = 0; kx < kernel; ++kx, src += cg) {
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= dx.height || ix >= dx.width) continue;
              Scalar* p = dst_base + dx.column(n, iy, ix) * cin + Eigen::Index(g) * cg;
              for (int c = 0; c < cg; ++c) p[c] += src[c];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Bias-free 2-D convolution, optionally grouped.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(int in, int out, int kernel, int stride = 1, int pad = 0, int groups = 1)
      : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad), groups_(groups) {
    if (in % groups != 0 || out % groups != 0) throw ShapeError("conv channels not divisible by groups");
    weight_.name = "weight";
    weight_.value = Matrix<Scalar>::Zero(out, Eigen::Index(kernel) * kernel * (in / groups));
    weight_.zero_grad();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    Matrix<Scalar> cols;
    return apply(x, cols);
  }

  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    in_shape_ = Tensor<Scalar>();
    in_shape_.batch = x.batch;
    in_shape_.height = x.height;
    in_shape_.width = x.width;
    if (pointwise()) input_ = x.data;
    return apply(x, cols_);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    Tensor<Scalar> dx(in_, in_shape_.batch, in_shape_.height, in_shape_.width);
    if (pointwise()) {
      weight_.grad.noalias() += grad.data * input_.transpose();
      dx.data.noalias() = weight_.value.transpose() * grad.data;
      return dx;
    }
    const Eigen::Index og = out_ / groups_;
    const Eigen::Index kg = weight_.value.cols();
    Matrix<Scalar> dcols(cols_.rows(), cols_.cols());
    for (int g = 0; g < groups_; ++g) {
      weight_.grad.middleRows(g * og, og).noalias() +=
          grad.data.middleRows(g * og, og) * cols_.middleRows(g * kg, kg).transpose();
      dcols.middleRows(g * kg, kg).noalias() =
          weight_.value.middleRows(g * og, og).transpose() * grad.data.middleRows(g * og, og);
    }
    detail::col2im(dcols, kernel_, stride_, pad_, groups_, grad.height, grad.width, dx);
    return dx;
  }

  /// He-normal with fan-out = out * kernel^2.
  void init(Rng& rng) override {
    const double sd = std::sqrt(2.0 / (double(out_) * kernel_ * kernel_));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = Scalar(sd * normal01(rng));
  }

  void collect(const std::string& prefix, std::vector<Parameter<Scalar>*>& out) override {
    weight_.name = prefix + "weight";
    out.push_back(&weight_);
  }

  void release() override {
    cols_ = Matrix<Scalar>();
    input_ = Matrix<Scalar>();
  }

  Parameter<Scalar>& weight() { return weight_; }

 private:
  bool pointwise() const { return kernel_ == 1 && stride_ == 1 && pad_ == 0 && groups_ == 1; }

  Tensor<Scalar> apply(const Tensor<Scalar>& x, Matrix<Scalar>& cols) const {
    if (x.channels() != in_) throw ShapeError("conv input has " + std::to_string(x.channels()) + " channels, expected " + std::to_string(in_));
    const int oh = detail::conv_out(x.height, kernel_, stride_, pad_);
    const int ow = detail::conv_out(x.width, kernel_, stride_, pad_);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv input smaller than kernel");
    Tensor<Scalar> y;
    y.batch = x.batch;
    y.height = oh;
    y.width = ow;
    if (pointwise()) {
      y.data.noalias() = weight_.value * x.data;
      return y;
    }
    detail::im2col(x, kernel_, stride_, pad_, groups_, oh, ow, cols);
    y.data.resize(out_, cols.cols());
    const Eigen::Index og = out_ / groups_;
    const Eigen::Index kg = weight_.value.cols();
    for (int g = 0; g < groups_; ++g) {
      y.data.middleRows(g * og, og).noalias() = weight_.value.middleRows(g * og, og) * cols.middleRows(g * kg, kg);
    }
    return y;
  }

  int in_, out_, kernel_, stride_, pad_, groups_;
  Parameter<Scalar> weight_;
  Tensor<Scalar> in_shape_;
  Matrix<Scalar> cols_;
  Matrix<Scalar> input_;
};

/// Per-channel batch normalization over batch and spatial positions.
template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(Scalar(momentum)), eps_(Scalar(eps)) {
    gamma_.name = "weight";
    gamma_.value = Matrix<Scalar>::Ones(channels, 1);
    beta_.name = "bias";
    beta_.value = Matrix<Scalar>::Zero(channels, 1);
    gamma_.zero_grad();
    beta_.zero_grad();
    running_mean_ = Matrix<Scalar>::Zero(channels, 1);
    running_var_ = Matrix<Scalar>::Ones(channels, 1);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    const auto inv = (running_var_.array() + eps_).rsqrt().matrix();
    Tensor<Scalar> y = x;
    y.data = ((x.data.colwise() - running_mean_.col(0)).array().colwise() * (inv.array() * gamma_.value.array()).col(0))
                 .colwise() +
             beta_.value.array().col(0);
    return y;
  }

  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    const Eigen::Index count = x.data.cols();
    const Vector<Scalar> mean = x.data.rowwise().mean();
    Tensor<Scalar> y = x;
    xhat_ = x.data.colwise() - mean;
    const Vector<Scalar> var = xhat_.array().square().rowwise().mean();
    invstd_ = (var.array() + eps_).rsqrt();
    xhat_.array().colwise() *= invstd_.array();
    y.data = (xhat_.array().colwise() * gamma_.value.array().col(0)).colwise() + beta_.value.array().col(0);
    const Scalar unbias = count > 1 ? Scalar(count) / Scalar(count - 1) : Scalar(1);
    running_mean_ = (Scalar(1) - momentum_) * running_mean_ + momentum_ * mean;
    running_var_ = (Scalar(1) - momentum_) * running_var_ + momentum_ * unbias * var;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    const Scalar count = Scalar(grad.data.cols());
    gamma_.grad.col(0) += (grad.data.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad.col(0) += grad.data.rowwise().sum();
    Matrix<Scalar> dxhat = grad.data.array().colwise() * gamma_.value.array().col(0);
    const Vector<Scalar> sum_dxhat = dxhat.rowwise().sum();
    const Vector<Scalar> sum_dxhat_xhat = (dxhat.array() * xhat_.array()).rowwise().sum();
    Tensor<Scalar> dx = grad;
    dx.data = ((dxhat.array() * count).colwise() - sum_dxhat.array() -
               xhat_.array().colwise() * sum_dxhat_xhat.array())
                  .colwise() *
              (invstd_.array() / count);
    return dx;
  }

  void collect(const std::string& prefix, std::vector<Parameter<Scalar>*>& out) override {
    gamma_.name = prefix + "weight";
    beta_.name = prefix + "bias";
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_buffers(const std::string& prefix, std::vector<Buffer<Scalar>>& out) override {
    out.push_back({prefix + "running_mean", &running_mean_});
    out.push_back({prefix + "running_var", &running_var_});
  }

  void release() override {
    xhat_ = Matrix<Scalar>();
    invstd_ = Vector<Scalar>();
  }

  Parameter<Scalar>& gamma() { return gamma_; }

 private:
  Scalar momentum_, eps_;
  Parameter<Scalar> gamma_, beta_;
  Matrix<Scalar> running_mean_, running_var_;
  Matrix<Scalar> xhat_;
  Vector<Scalar> invstd_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    Tensor<Scalar> y = x;
    y.data = y.data.cwiseMax(Scalar(0));
    return y;
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    Tensor<Scalar> y = forward(x);
    output_ = y.data;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    Tensor<Scalar> dx = grad;
    dx.data = (output_.array() > Scalar(0)).select(grad.data, Scalar(0));
    return dx;
  }
  void release() override { output_ = Matrix<Scalar>(); }

 private:
  Matrix<Scalar> output_;
};

template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  MaxPool2d(int kernel, int stride, int pad) : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    std::vector<Eigen::Index> arg;
    return apply(x, arg);
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    in_shape_ = Tensor<Scalar>();
    in_shape_.batch = x.batch;
    in_shape_.height = x.height;
    in_shape_.width = x.width;
    channels_ = x.channels();
    return apply(x, argmax_);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    Tensor<Scalar> dx(channels_, in_shape_.batch, in_shape_.height, in_shape_.width);
    const Scalar* g = grad.data.data();
    Scalar* d = dx.data.data();
    for (std::size_t i = 0; i < argmax_.size(); ++i) d[argmax_[i]] += g[i];
    return dx;
  }
  void release() override { argmax_.clear(); }

 private:
  // argmax holds flat offsets into the input storage.
  Tensor<Scalar> apply(const Tensor<Scalar>& x, std::vector<Eigen::Index>& argmax) const {
    const int oh = detail::conv_out(x.height, kernel_, stride_, pad_);
    const int ow = detail::conv_out(x.width, kernel_, stride_, pad_);
    const int c = x.channels();
    Tensor<Scalar> y(c, x.batch, oh, ow);
    argmax.assign(std::size_t(y.data.size()), 0);
    for (int n = 0; n < x.batch; ++n) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index oc = y.column(n, oy, ox);
          Scalar* out = y.data.data() + oc * c;
          Eigen::Index* arg = argmax.data() + oc * c;
          std::fill(out, out + c, -std::numeric_limits<Scalar>::infinity());
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.height) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.width) continue;
              const Eigen::Index base = x.column(n, iy, ix) * c;
              const Scalar* in = x.data.data() + base;
              for (int ch = 0; ch < c; ++ch) {
                if (in[ch] > out[ch]) {
                  out[ch] = in[ch];
                  arg[ch] = base + ch;
                }
              }
            }
          }
        }
      }
    }
    return y;
  }

  int kernel_, stride_, pad_;
  int channels_ = 0;
  Tensor<Scalar> in_shape_;
  std::vector<Eigen::Index> argmax_;
};

/// Mean over each sample's spatial positions; output is channels x batch
/// with unit height and width.
template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    Tensor<Scalar> y(x.channels(), x.batch, 1, 1);
    const Eigen::Index plane = x.plane();
    for (int n = 0; n < x.batch; ++n) y.data.col(n) = x.data.middleCols(n * plane, plane).rowwise().mean();
    return y;
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    height_ = x.height;
    width_ = x.width;
    return forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    Tensor<Scalar> dx(grad.channels(), grad.batch, height_, width_);
    const Eigen::Index plane = dx.plane();
    for (int n = 0; n < grad.batch; ++n) {
      dx.data.middleCols(n * plane, plane).colwise() = grad.data.col(n) / Scalar(plane);
    }
    return dx;
  }

 private:
  int height_ = 0, width_ = 0;
};

/// Affine map on channels x batch tensors (unit spatial size).
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(int in, int out) {
    weight_.name = "weight";
    weight_.value = Matrix<Scalar>::Zero(out, in);
    bias_.name = "bias";
    bias_.value = Matrix<Scalar>::Zero(out, 1);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    if (x.channels() != weight_.value.cols()) throw ShapeError("linear input width mismatch");
    Tensor<Scalar> y(int(weight_.value.rows()), x.batch, x.height, x.width);
    y.data.noalias() = weight_.value * x.data;
    y.data.colwise() += bias_.value.col(0);
    return y;
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    input_ = x;
    return forward(x);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    weight_.grad.noalias() += grad.data * input_.data.transpose();
    bias_.grad.col(0) += grad.data.rowwise().sum();
    Tensor<Scalar> dx = input_;
    dx.data.noalias() = weight_.value.transpose() * grad.data;
    return dx;
  }

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void init(Rng& rng) override {
    const double bound = 1.0 / std::sqrt(double(weight_.value.cols()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = Scalar(uniform(rng, -bound, bound));
    for (Eigen::Index i = 0; i < bias_.value.size(); ++i) bias_.value.data()[i] = Scalar(uniform(rng, -bound, bound));
  }

  void collect(const std::string& prefix, std::vector<Parameter<Scalar>*>& out) override {
    weight_.name = prefix + "weight";
    bias_.name = prefix + "bias";
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void release() override { input_ = Tensor<Scalar>(); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  const Parameter<Scalar>& bias() const { return bias_; }

 private:
  Parameter<Scalar> weight_, bias_;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class Sequential final : public Layer<Scalar> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer<Scalar>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    if (layers_.empty()) return x;
    Tensor<Scalar> y = layers_.front()->forward(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) y = layers_[i]->forward(y);
    return y;
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    if (layers_.empty()) return x;
    Tensor<Scalar> y = layers_.front()->forward_train(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) y = layers_[i]->forward_train(y);
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    if (layers_.empty()) return grad;
    Tensor<Scalar> g = layers_.back()->backward(grad);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }
  void init(Rng& rng) override {
    for (auto& l : layers_) l->init(rng);
  }
  void collect(const std::string& prefix, std::vector<Parameter<Scalar>*>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(prefix + std::to_string(i) + ".", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<Buffer<Scalar>>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
  }
  void release() override {
    for (auto& l : layers_) l->release();
  }

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// relu(main(x) + shortcut(x)); an empty shortcut is the identity.
template <typename Scalar>
class Residual final : public Layer<Scalar> {
 public:
  Sequential<Scalar>& main() { return main_; }
  Sequential<Scalar>& shortcut() { return shortcut_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const override {
    Tensor<Scalar> y = main_.forward(x);
    if (shortcut_.empty()) {
      y.data += x.data;
    } else {
      y.data += shortcut_.forward(x).data;
    }
    y.data = y.data.cwiseMax(Scalar(0));
    return y;
  }
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) override {
    Tensor<Scalar> y = main_.forward_train(x);
    if (shortcut_.empty()) {
      y.data += x.data;
    } else {
      y.data += shortcut_.forward_train(x).data;
    }
    y.data = y.data.cwiseMax(Scalar(0));
    output_ = y.data;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& grad) override {
    Tensor<Scalar> dz = grad;
    dz.data = (output_.array() > Scalar(0)).select(grad.data, Scalar(0));
    Tensor<Scalar> dx = main_.backward(dz);
    if (shortcut_.empty()) {
      dx.data += dz.data;
    } else {
      dx.data += shortcut_.backward(dz).data;
    }
    return dx;
  }
  void init(Rng& rng) override {
    main_.init(rng);
    shortcut_.init(rng);
  }
  void collect(const std::string& prefix, std::vector<Parameter<Scalar>*>& out) override {
    main_.collect(prefix + "main.", out);
    shortcut_.collect(prefix + "shortcut.", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<Buffer<Scalar>>& out) override {
    main_.collect_buffers(prefix + "main.", out);
    shortcut_.collect_buffers(prefix + "shortcut.", out);
  }
  void release() override {
    main_.release();
    shortcut_.release();
    output_ = Matrix<Scalar>();
  }

 private:
  Sequential<Scalar> main_;
  Sequential<Scalar> shortcut_;
  Matrix<Scalar> output_;
};

}  // namespace wedge::nn
