#pragma once

#include <array>

#include "wedge/image.hpp"
#include "wedge/rng.hpp"

namespace wedge {

struct Normalization {
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.5f, 0.5f, 0.5f};
};

/// Training-time geometric transforms. Rotation and perspective are drawn
/// independently, each with its own probability.
struct AugmentPolicy {
  bool enabled = true;
  double rotation_prob = 0.5;
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 360.0;
  double perspective_prob = 0.5;
  /// Maximum inward displacement of each corner, as a fraction of the side.
  double perspective_strength = 0.3;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;

  static AugmentPolicy disabled() {
    AugmentPolicy p;
    p.enabled = false;
    return p;
  }
};

/// Per-channel (v - mean) / std. No randomness.
ImageF prepare_eval(const ImageF& crop, const Normalization& norm = {});

/// Random rotation and/or perspective warp followed by normalization.
/// Everything random comes from `rng`; a disabled policy draws nothing and
/// returns prepare_eval(crop).
ImageF prepare_train(const ImageF& crop, const AugmentPolicy& policy, Rng& rng, const Normalization& norm = {});

/// Rotation about the image center, bilinear, zeros outside the source.
ImageF rotate(const ImageF& image, double degrees);

/// Maps the image's corners (tl, tr, br, bl) onto `target` in an output of
/// the same size; bilinear, zeros wherever the source is not covered.
ImageF warp_perspective(const ImageF& image, const std::array<Eigen::Vector2d, 4>& target);

/// Homography H with H * (dst, 1) ~ (src, 1) for the four correspondences.
Eigen::Matrix3d homography(const std::array<Eigen::Vector2d, 4>& dst, const std::array<Eigen::Vector2d, 4>& src);

/// Draws the target quad of prepare_train's perspective step: every corner
/// moves inward by up to strength * side along each axis.
std::array<Eigen::Vector2d, 4> random_perspective_corners(int width, int height, double strength, Rng& rng);

}  // namespace wedge
