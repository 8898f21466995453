#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wedge/nn/layers.hpp"

namespace wedge::nn {

/// Residual trunks. The three ImageNet-style depths follow the usual
/// layouts; `Compact` is a narrow three-stage network with a 4x4/4 stem
/// sized for single-core CPU training at 224x224.
enum class BackboneKind { ResNet50, ResNet18, ResNeXt50, Compact };

std::string_view to_string(BackboneKind kind);
std::optional<BackboneKind> parse_backbone(std::string_view name);

inline constexpr int kFeatureDim = 2048;

/// Backbone + global pooling + linear head. Every variant ends in a
/// 2048-channel map before pooling; trunks that are narrower get a
/// 1x1 conv-BN-ReLU expansion.
template <typename Scalar>
class Network {
 public:
  Network(BackboneKind kind, int n_classes);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  BackboneKind kind() const { return kind_; }
  int n_classes() const { return n_classes_; }

  void init(Rng& rng);

  /// Pooled penultimate features, 2048 x batch.
  Matrix<Scalar> features(const Tensor<Scalar>& input) const;
  /// Logits, n_classes x batch.
  Matrix<Scalar> logits(const Tensor<Scalar>& input) const;
  Matrix<Scalar> head(const Matrix<Scalar>& features) const;

  Matrix<Scalar> forward_train(const Tensor<Scalar>& input);
  void backward(const Matrix<Scalar>& dlogits);
  void release();

  /// Names are stable across builds of the same kind and class count.
  std::vector<Parameter<Scalar>*> parameters();
  std::vector<Buffer<Scalar>> buffers();

  Linear<Scalar>& classifier() { return head_; }

 private:
  BackboneKind kind_;
  int n_classes_;
  Sequential<Scalar> trunk_;
  GlobalAvgPool<Scalar> pool_;
  Linear<Scalar> head_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace wedge::nn
