#include <doctest.h>

#include <Eigen/Geometry>

#include "wedge/augment.hpp"

using namespace wedge;

namespace {

ImageF random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageF img(w, h);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = float(uniform01(rng));
  return img;
}

}  // namespace

TEST_CASE("eval preparation normalizes per channel") {
  ImageF img(2, 1);
  img.pixels << 0.5f, 1.0f, 0.0f, 0.25f, 1.0f, 0.5f;
  Normalization n;
  n.mean = {0.5f, 0.0f, 1.0f};
  n.std = {0.5f, 0.25f, 0.5f};
  const auto out = prepare_eval(img, n);
  CHECK(out.pixels(0, 0) == doctest::Approx(0.0));
  CHECK(out.pixels(0, 1) == doctest::Approx(1.0));
  CHECK(out.pixels(1, 1) == doctest::Approx(1.0));
  CHECK(out.pixels(2, 0) == doctest::Approx(0.0));
  CHECK(out.pixels(2, 1) == doctest::Approx(-1.0));
}

TEST_CASE("rotation") {
  const auto img = random_image(32, 32, 1);
  CHECK((rotate(img, 360.0).pixels - img.pixels).cwiseAbs().maxCoeff() <= 1e-6f);
  CHECK((rotate(img, 0.0).pixels - img.pixels).cwiseAbs().maxCoeff() <= 1e-6f);
  // a quarter turn of a square image about its center permutes pixels exactly
  const auto q = rotate(rotate(rotate(rotate(img, 90), 90), 90), 90);
  CHECK((q.pixels - img.pixels).cwiseAbs().maxCoeff() <= 1e-5f);
  const auto r = rotate(img, 45);
  CHECK(r.at(0, 0).isZero());
}

TEST_CASE("perspective") {
  const auto img = random_image(24, 24, 2);
  const std::array<Eigen::Vector2d, 4> identity{Eigen::Vector2d(0, 0), Eigen::Vector2d(23, 0), Eigen::Vector2d(23, 23),
                                               Eigen::Vector2d(0, 23)};
  CHECK((warp_perspective(img, identity).pixels - img.pixels).cwiseAbs().maxCoeff() <= 1e-5f);

  const std::array<Eigen::Vector2d, 4> dst{Eigen::Vector2d(1, 2), Eigen::Vector2d(20, 0), Eigen::Vector2d(23, 22),
                                          Eigen::Vector2d(3, 19)};
  const auto H = homography(dst, identity);
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = H * dst[std::size_t(i)].homogeneous();
    CHECK((p.hnormalized() - identity[std::size_t(i)]).norm() < 1e-9);
  }

  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto c = random_perspective_corners(100, 80, 0.3, rng);
    CHECK(c[0].x() >= 0);
    CHECK(c[0].x() <= 30);
    CHECK(c[2].x() >= 69);
    CHECK(c[2].y() >= 55);
    CHECK(c[2].y() <= 79);
  }
}

TEST_CASE("train preparation is a function of the rng state") {
  const auto img = random_image(48, 48, 3);
  AugmentPolicy policy;
  policy.rotation_prob = 1.0;
  policy.perspective_prob = 1.0;
  Rng a(99), b(99);
  const auto x = prepare_train(img, policy, a);
  const auto y = prepare_train(img, policy, b);
  CHECK(x.pixels == y.pixels);
  CHECK(a() == b());
  Rng c(100);
  CHECK(prepare_train(img, policy, c).pixels != x.pixels);
}

TEST_CASE("a disabled policy matches eval preparation and draws nothing") {
  const auto img = random_image(20, 20, 5);
  Rng rng(7), untouched(7);
  CHECK(prepare_train(img, AugmentPolicy::disabled(), rng).pixels == prepare_eval(img).pixels);
  CHECK(rng() == untouched());

  AugmentPolicy never;
  never.rotation_prob = 0;
  never.perspective_prob = 0;
  CHECK(prepare_train(img, never, rng).pixels == prepare_eval(img).pixels);
}

TEST_CASE("policy validation") {
  AugmentPolicy p;
  CHECK_NOTHROW(p.validate());
  p.rotation_prob = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.perspective_strength = 0.6;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.rotation_min_deg = 10;
  p.rotation_max_deg = 5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
