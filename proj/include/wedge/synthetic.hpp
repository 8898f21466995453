#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wedge/corpus.hpp"
#include "wedge/image.hpp"

namespace wedge::synthetic {

/// One stylus impression in sign-local units (the sign spans about
/// [-1, 1]^2). The head sits at (x, y); the tail runs along `angle_deg`.
struct WedgeSpec {
  double x = 0;
  double y = 0;
  double angle_deg = 0;
  double length = 1.6;
  double head_width = 0.45;
  double head_length = 0.45;
};

struct GlyphSpec {
  std::string name;
  std::vector<WedgeSpec> wedges;
};

/// Ten wedge compositions that stay distinguishable under rotation.
const std::vector<GlyphSpec>& glyph_library();

/// Scribal hand of one provenience.
struct Style {
  double shear = 0;        // x += shear * y in sign units
  double stretch = 1;      // x scale
  double head_scale = 1;
  double tail_scale = 1;   // tail length factor
  double twist_deg = 0;    // added to every wedge direction
  double depth_scale = 1;
};

struct ProvenienceSpec {
  std::string name;
  Style style;
  int per_class = 10;
  /// When non-empty, every sign draws its style as a random convex
  /// combination of these proveniences' styles (indices into the list).
  std::vector<int> blend_of;
};

struct FixtureConfig {
  int n_classes = 10;
  std::vector<ProvenienceSpec> proveniences;
  std::uint64_t seed = 1;
  int cell_px = 64;
  int cols = 8;
  int rows = 6;
  double sign_radius_px = 22;
  /// Visualizations written for every surface.
  std::vector<Visualization> visualizations{kAllVisualizations.begin(), kAllVisualizations.end()};
};

/// 10 classes, 40 signs per class over three proveniences.
FixtureConfig glyph_fixture();
/// 10 classes, 60 signs per class; the first provenience holds half and has
/// a distinctive hand.
FixtureConfig fine_tune_fixture();
/// Three strongly different hands plus a fourth provenience whose signs
/// blend the other three.
FixtureConfig transfer_fixture();
FixtureConfig fixture_by_name(std::string_view name);

/// Renders every surface image and writes `root/manifest.json`. Output is a
/// pure function of the config.
void write_fixture(const std::filesystem::path& root, const FixtureConfig& config);

/// Surface height field (negative inside impressions) to each rendering.
ImageU8 render(const Eigen::MatrixXd& height, Visualization visualization, std::uint64_t noise_seed);

}  // namespace wedge::synthetic
