#include "wedge/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/LU>

namespace wedge {

namespace {

// Bilinear sample where every tap outside the image contributes zero.
Eigen::Vector3d sample_zero(const ImageF& img, double sx, double sy) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  if (sx <= -1.0 || sy <= -1.0 || sx >= img.width || sy >= img.height) return out;
  const double fx = std::floor(sx), fy = std::floor(sy);
  const int x0 = int(fx), y0 = int(fy);
  const double wx = sx - fx, wy = sy - fy;
  const double w[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int t = 0; t < 4; ++t) {
    if (w[t] != 0.0 && img.contains(xs[t], ys[t])) out += w[t] * img.at(xs[t], ys[t]).cast<double>();
  }
  return out;
}

}  // namespace

void AugmentPolicy::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(rotation_prob) || !prob(perspective_prob)) throw std::invalid_argument("augment probabilities must lie in [0,1]");
  if (!(perspective_strength >= 0.0 && perspective_strength < 0.5)) {
    throw std::invalid_argument("perspective strength must lie in [0, 0.5)");
  }
  if (!(rotation_min_deg >= 0.0 && rotation_min_deg <= rotation_max_deg && rotation_max_deg <= 360.0)) {
    throw std::invalid_argument("rotation range must satisfy 0 <= min <= max <= 360");
  }
}

ImageF prepare_eval(const ImageF& crop, const Normalization& norm) {
  ImageF out = crop;
  for (int c = 0; c < 3; ++c) {
    out.pixels.row(c) = (crop.pixels.row(c).array() - norm.mean[std::size_t(c)]) / norm.std[std::size_t(c)];
  }
  return out;
}

ImageF rotate(const ImageF& image, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = 0.5 * (image.width - 1), cy = 0.5 * (image.height - 1);
  ImageF out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      // inverse map: rotate the output position back by -a
      const double sx = ca * dx + sa * dy + cx;
      const double sy = -sa * dx + ca * dy + cy;
      out.at(x, y) = sample_zero(image, sx, sy).cast<float>();
    }
  }
  return out;
}

Eigen::Matrix3d homography(const std::array<Eigen::Vector2d, 4>& dst, const std::array<Eigen::Vector2d, 4>& src) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = dst[std::size_t(i)].x(), y = dst[std::size_t(i)].y();
    const double u = src[std::size_t(i)].x(), v = src[std::size_t(i)].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

ImageF warp_perspective(const ImageF& image, const std::array<Eigen::Vector2d, 4>& target) {
  const double w = image.width - 1, h = image.height - 1;
  const std::array<Eigen::Vector2d, 4> source{Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(w, h),
                                              Eigen::Vector2d(0, h)};
  const Eigen::Matrix3d m = homography(target, source);
  ImageF out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Vector3d s = m * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(s.z()) < 1e-12) continue;
      out.at(x, y) = sample_zero(image, s.x() / s.z(), s.y() / s.z()).cast<float>();
    }
  }
  return out;
}

std::array<Eigen::Vector2d, 4> random_perspective_corners(int width, int height, double strength, Rng& rng) {
  const double w = width - 1, h = height - 1;
  const double mx = strength * width, my = strength * height;
  auto d = [&](double m) { return uniform(rng, 0.0, m); };
  std::array<Eigen::Vector2d, 4> c;
  c[0] = {d(mx), d(my)};
  c[1] = {w - d(mx), d(my)};
  c[2] = {w - d(mx), h - d(my)};
  c[3] = {d(mx), h - d(my)};
  return c;
}

ImageF prepare_train(const ImageF& crop, const AugmentPolicy& policy, Rng& rng, const Normalization& norm) {
  if (!policy.enabled) return prepare_eval(crop, norm);
  ImageF img = crop;
  if (uniform01(rng) < policy.rotation_prob) {
    img = rotate(img, uniform(rng, policy.rotation_min_deg, policy.rotation_max_deg));
  }
  if (uniform01(rng) < policy.perspective_prob) {
    img = warp_perspective(img, random_perspective_corners(img.width, img.height, policy.perspective_strength, rng));
  }
  return prepare_eval(img, norm);
}

}  // namespace wedge
