#include <doctest.h>

#include <cmath>
#include <functional>

#include "wedge/nn/backbone.hpp"
#include "wedge/nn/layers.hpp"
#include "wedge/nn/loss.hpp"
#include "wedge/nn/optim.hpp"

using namespace wedge;
using namespace wedge::nn;

namespace {

using T = Tensor<double>;
using M = Matrix<double>;

void fill_random(M& m, Rng& rng, double scale = 1.0) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal01(rng);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

// Loss sum(R .* layer(x)) in training mode; compares the analytic input and
// parameter gradients against central differences.
void check_layer(Layer<double>& layer, T x, std::uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  layer.init(rng);
  std::vector<Parameter<double>*> params;
  layer.collect("", params);
  for (auto* p : params) {
    fill_random(p->value, rng, 0.5);
    p->value.array() += 0.2;
  }

  const T y0 = layer.forward_train(x);
  M r(y0.data.rows(), y0.data.cols());
  fill_random(r, rng);
  auto loss = [&](const T& in) { return (layer.forward_train(in).data.array() * r.array()).sum(); };

  for (auto* p : params) p->zero_grad();
  layer.forward_train(x);
  const T dx = layer.backward(T(r, y0.batch, y0.height, y0.width));
  std::vector<M> grads;
  for (auto* p : params) grads.push_back(p->grad);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.data.size(); i += std::max<Eigen::Index>(1, x.data.size() / 40)) {
    T xp = x, xm = x;
    xp.data.data()[i] += h;
    xm.data.data()[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    CHECK_MESSAGE(rel_err(fd, dx.data.data()[i]) < tol, "input ", i, ": ", fd, " vs ", dx.data.data()[i]);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    for (Eigen::Index i = 0; i < v.size(); i += std::max<Eigen::Index>(1, v.size() / 20)) {
      const double keep = v.data()[i];
      v.data()[i] = keep + h;
      const double lp = loss(x);
      v.data()[i] = keep - h;
      const double lm = loss(x);
      v.data()[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      CHECK_MESSAGE(rel_err(fd, grads[k].data()[i]) < tol, params[k]->name, " ", i, ": ", fd, " vs ", grads[k].data()[i]);
    }
  }
}

T random_tensor(int c, int n, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  T t(c, n, h, w);
  fill_random(t.data, rng);
  return t;
}

}  // namespace

TEST_CASE("conv2d gradients") {
  SUBCASE("3x3 stride 1 pad 1") {
    Conv2d<double> conv(3, 4, 3, 1, 1);
    check_layer(conv, random_tensor(3, 2, 5, 6, 1), 10);
  }
  SUBCASE("strided") {
    Conv2d<double> conv(2, 3, 3, 2, 1);
    check_layer(conv, random_tensor(2, 2, 7, 7, 2), 11);
  }
  SUBCASE("grouped") {
    Conv2d<double> conv(4, 6, 3, 1, 1, 2);
    check_layer(conv, random_tensor(4, 1, 5, 5, 3), 12);
  }
  SUBCASE("pointwise") {
    Conv2d<double> conv(5, 3, 1);
    check_layer(conv, random_tensor(5, 2, 3, 4, 4), 13);
  }
  SUBCASE("pointwise strided") {
    Conv2d<double> conv(3, 2, 1, 2, 0);
    check_layer(conv, random_tensor(3, 2, 6, 5, 5), 14);
  }
}

TEST_CASE("conv2d matches a direct convolution") {
  Conv2d<double> conv(2, 3, 3, 2, 1);
  Rng rng(9);
  conv.init(rng);
  const T x = random_tensor(2, 1, 6, 5, 8);
  const T y = conv.forward(x);
  CHECK(y.height == 3);
  CHECK(y.width == 3);
  const M& w = conv.weight().value;  // rows ordered (ky, kx, c)
  for (int o = 0; o < 3; ++o) {
    for (int oy = 0; oy < 3; ++oy) {
      for (int ox = 0; ox < 3; ++ox) {
        double s = 0;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
            if (iy < 0 || ix < 0 || iy >= 6 || ix >= 5) continue;
            for (int c = 0; c < 2; ++c) s += w(o, (ky * 3 + kx) * 2 + c) * x.data(c, x.column(0, iy, ix));
          }
        }
        CHECK(y.data(o, y.column(0, oy, ox)) == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("batchnorm gradients and statistics") {
  BatchNorm2d<double> bn(3);
  check_layer(bn, random_tensor(3, 3, 4, 4, 20), 21);

  BatchNorm2d<double> fresh(2);
  T x = random_tensor(2, 4, 3, 3, 22);
  x.data.array() += 5.0;
  const T y = fresh.forward_train(x);
  CHECK(std::abs(y.data.row(0).mean()) < 1e-9);
  std::vector<Buffer<double>> bufs;
  fresh.collect_buffers("", bufs);
  REQUIRE(bufs.size() == 2);
  CHECK((*bufs[0].value)(0, 0) == doctest::Approx(0.1 * x.data.row(0).mean()));
}

TEST_CASE("linear, relu, pooling gradients") {
  Linear<double> lin(6, 4);
  check_layer(lin, random_tensor(6, 5, 1, 1, 30), 31);
  ReLU<double> relu;
  check_layer(relu, random_tensor(3, 2, 4, 4, 32), 33);
  MaxPool2d<double> pool(3, 2, 1);
  check_layer(pool, random_tensor(2, 2, 6, 6, 34), 35);
  GlobalAvgPool<double> gap;
  check_layer(gap, random_tensor(4, 3, 3, 5, 36), 37);
}

TEST_CASE("residual block gradients") {
  Residual<double> block;
  block.main().add<Conv2d<double>>(3, 4, 3, 2, 1);
  block.main().add<BatchNorm2d<double>>(4);
  block.main().add<ReLU<double>>();
  block.main().add<Conv2d<double>>(4, 4, 3, 1, 1);
  block.shortcut().add<Conv2d<double>>(3, 4, 1, 2, 0);
  check_layer(block, random_tensor(3, 2, 6, 6, 40), 41, 1e-5);

  Residual<double> identity;
  identity.main().add<Conv2d<double>>(2, 2, 3, 1, 1);
  check_layer(identity, random_tensor(2, 2, 4, 4, 42), 43);
}

TEST_CASE("cross entropy gradient and value") {
  Rng rng(50);
  M logits(7, 4);
  fill_random(logits, rng, 3.0);
  const std::vector<int> labels{0, 6, 3, 3};
  const auto r = cross_entropy(logits, labels);
  double expect = 0;
  for (int j = 0; j < 4; ++j) {
    const double lse = std::log(logits.col(j).array().exp().sum());
    expect += lse - logits(labels[std::size_t(j)], j);
  }
  CHECK(r.loss == doctest::Approx(expect / 4).epsilon(1e-12));
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    M p = logits, m = logits;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd = (cross_entropy(p, labels).loss - cross_entropy(m, labels).loss) / (2 * h);
    CHECK(std::abs(fd - r.grad.data()[i]) < 1e-8 + 1e-6 * std::abs(r.grad.data()[i]));
  }
  const M sm = softmax_columns(logits);
  for (int j = 0; j < 4; ++j) CHECK(sm.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>{0, 1}), ShapeError);
  CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>{0, 1, 2, 9}), ShapeError);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 30, 1e-3, 1e-5) == 1e-3);
  CHECK(cosine_lr(29, 30, 1e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cosine_lr(7, 15, 1.0, 0.0) == doctest::Approx(0.5));
  CHECK(cosine_lr(0, 1, 0.3, 0.1) == 0.3);
  for (int e = 1; e < 30; ++e) CHECK(cosine_lr(e, 30, 1e-3, 1e-5) < cosine_lr(e - 1, 30, 1e-3, 1e-5));
}

TEST_CASE("adamw matches a scalar reference") {
  Parameter<double> p{"w", M::Constant(1, 1, 2.0), M::Zero(1, 1)};
  AdamWOptions opt;
  opt.weight_decay = 0.1;
  AdamW<double> adam({&p}, opt);
  double w = 2.0, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 3.0 * w - 1.0;
    p.grad(0, 0) = 3.0 * p.value(0, 0) - 1.0;
    adam.step(0.01);
    w *= 1 - 0.01 * 0.1;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.value(0, 0) == doctest::Approx(w).epsilon(1e-12));
  }
  CHECK(adam.steps() == 5);
}

TEST_CASE("network ends in 2048 features for every backbone") {
  for (auto kind : {BackboneKind::Compact, BackboneKind::ResNet18}) {
    Network<float> net(kind, 5);
    Rng rng(1);
    net.init(rng);
    Tensor<float> x(3, 2, 64, 64);
    x.data.setRandom();
    CHECK(net.features(x).rows() == kFeatureDim);
    CHECK(net.features(x).cols() == 2);
    CHECK(net.logits(x).rows() == 5);
  }
  CHECK(parse_backbone("resnext50_32x4d") == BackboneKind::ResNeXt50);
  CHECK_THROWS_AS(Network<float>(BackboneKind::Compact, 0), ShapeError);
}

TEST_CASE("whole compact network gradient in double") {
  Network<double> net(BackboneKind::Compact, 3);
  Rng rng(2);
  net.init(rng);
  Tensor<double> x(3, 2, 32, 32);
  fill_random(x.data, rng);
  const std::vector<int> labels{1, 2};
  auto loss = [&] { return cross_entropy(net.forward_train(x), labels).loss; };

  auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  const auto r = cross_entropy(net.forward_train(x), labels);
  net.backward(r.grad);

  const double h = 1e-6;
  int checked = 0;
  for (auto* p : params) {
    if (p->value.size() == 0) continue;
    const Eigen::Index i = p->value.size() / 2;
    const double keep = p->value.data()[i];
    p->value.data()[i] = keep + h;
    const double lp = loss();
    p->value.data()[i] = keep - h;
    const double lm = loss();
    p->value.data()[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double an = p->grad.data()[i];
    if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
    CHECK_MESSAGE(rel_err(fd, an) < 1e-4, p->name, ": ", fd, " vs ", an);
    ++checked;
  }
  CHECK(checked > 10);
}
