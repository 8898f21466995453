#include "wedge/nn/backbone.hpp"

#include <array>

namespace wedge::nn {

std::string_view to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::ResNet50: return "resnet50";
    case BackboneKind::ResNet18: return "resnet18";
    case BackboneKind::ResNeXt50: return "resnext50_32x4d";
    case BackboneKind::Compact: return "compact";
  }
  return "?";
}

std::optional<BackboneKind> parse_backbone(std::string_view name) {
  for (auto k : {BackboneKind::ResNet50, BackboneKind::ResNet18, BackboneKind::ResNeXt50, BackboneKind::Compact}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

template <typename Scalar>
void conv_bn(Sequential<Scalar>& seq, int in, int out, int kernel, int stride, int pad, int groups = 1) {
  seq.template add<Conv2d<Scalar>>(in, out, kernel, stride, pad, groups);
  seq.template add<BatchNorm2d<Scalar>>(out);
}

template <typename Scalar>
void add_shortcut(Residual<Scalar>& block, int in, int out, int stride) {
  if (stride != 1 || in != out) conv_bn(block.shortcut(), in, out, 1, stride, 0);
}

template <typename Scalar>
void basic_block(Sequential<Scalar>& trunk, int in, int out, int stride) {
  auto& block = trunk.template add<Residual<Scalar>>();
  conv_bn(block.main(), in, out, 3, stride, 1);
  block.main().template add<ReLU<Scalar>>();
  conv_bn(block.main(), out, out, 3, 1, 1);
  add_shortcut(block, in, out, stride);
}

// Stride sits on the 3x3 convolution.
template <typename Scalar>
void bottleneck(Sequential<Scalar>& trunk, int in, int width, int out, int stride, int groups) {
  auto& block = trunk.template add<Residual<Scalar>>();
  conv_bn(block.main(), in, width, 1, 1, 0);
  block.main().template add<ReLU<Scalar>>();
  conv_bn(block.main(), width, width, 3, stride, 1, groups);
  block.main().template add<ReLU<Scalar>>();
  conv_bn(block.main(), width, out, 1, 1, 0);
  add_shortcut(block, in, out, stride);
}

template <typename Scalar>
void imagenet_stem(Sequential<Scalar>& trunk) {
  conv_bn(trunk, 3, 64, 7, 2, 3);
  trunk.template add<ReLU<Scalar>>();
  trunk.template add<MaxPool2d<Scalar>>(3, 2, 1);
}

template <typename Scalar>
int build_trunk(Sequential<Scalar>& trunk, BackboneKind kind) {
  constexpr std::array<int, 4> deep_blocks{3, 4, 6, 3};
  switch (kind) {
    case BackboneKind::ResNet50:
    case BackboneKind::ResNeXt50: {
      imagenet_stem(trunk);
      const bool next = kind == BackboneKind::ResNeXt50;
      const int groups = next ? 32 : 1;
      int in = 64;
      for (int stage = 0; stage < 4; ++stage) {
        const int planes = 64 << stage;
        const int width = next ? planes * 2 : planes;  // 32x4d doubles the inner width
        const int out = planes * 4;
        for (int b = 0; b < deep_blocks[std::size_t(stage)]; ++b) {
          bottleneck(trunk, in, width, out, (b == 0 && stage > 0) ? 2 : 1, groups);
          in = out;
        }
      }
      return in;
    }
    case BackboneKind::ResNet18: {
      imagenet_stem(trunk);
      int in = 64;
      for (int stage = 0; stage < 4; ++stage) {
        const int out = 64 << stage;
        for (int b = 0; b < 2; ++b) {
          basic_block(trunk, in, out, (b == 0 && stage > 0) ? 2 : 1);
          in = out;
        }
      }
      return in;
    }
    case BackboneKind::Compact: {
      conv_bn(trunk, 3, 24, 4, 4, 0);
      trunk.template add<ReLU<Scalar>>();
      trunk.template add<MaxPool2d<Scalar>>(3, 2, 1);
      basic_block(trunk, 24, 24, 1);
      basic_block(trunk, 24, 48, 2);
      basic_block(trunk, 48, 96, 2);
      return 96;
    }
  }
  throw ShapeError("unknown backbone");
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(BackboneKind kind, int n_classes)
    : kind_(kind), n_classes_(n_classes), head_(kFeatureDim, n_classes) {
  if (n_classes < 1) throw ShapeError("network needs at least one class");
  const int trunk_out = build_trunk(trunk_, kind);
  if (trunk_out != kFeatureDim) {
    conv_bn(trunk_, trunk_out, kFeatureDim, 1, 1, 0);
    trunk_.template add<ReLU<Scalar>>();
  }
}

template <typename Scalar>
void Network<Scalar>::init(Rng& rng) {
  trunk_.init(rng);
  head_.init(rng);
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::features(const Tensor<Scalar>& input) const {
  return pool_.forward(trunk_.forward(input)).data;
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::head(const Matrix<Scalar>& features) const {
  return head_.forward(Tensor<Scalar>(features, int(features.cols()), 1, 1)).data;
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::logits(const Tensor<Scalar>& input) const {
  return head(features(input));
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward_train(const Tensor<Scalar>& input) {
  return head_.forward_train(pool_.forward_train(trunk_.forward_train(input))).data;
}

template <typename Scalar>
void Network<Scalar>::backward(const Matrix<Scalar>& dlogits) {
  Tensor<Scalar> g(dlogits, int(dlogits.cols()), 1, 1);
  trunk_.backward(pool_.backward(head_.backward(g)));
}

template <typename Scalar>
void Network<Scalar>::release() {
  trunk_.release();
  head_.release();
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> Network<Scalar>::parameters() {
  std::vector<Parameter<Scalar>*> out;
  trunk_.collect("trunk.", out);
  head_.collect("head.", out);
  return out;
}

template <typename Scalar>
std::vector<Buffer<Scalar>> Network<Scalar>::buffers() {
  std::vector<Buffer<Scalar>> out;
  trunk_.collect_buffers("trunk.", out);
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace wedge::nn
