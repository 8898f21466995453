#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "wedge/image.hpp"

namespace wedge {

using Point = Eigen::Vector2d;
using Polygon = std::vector<Point>;

inline constexpr int kCropSize = 224;

/// Axis-aligned square in pixel coordinates; may extend past the image.
struct SquareBox {
  int x0 = 0;
  int y0 = 0;
  int side = 0;

  int x1() const { return x0 + side; }
  int y1() const { return y0 + side; }
  friend bool operator==(const SquareBox&, const SquareBox&) = default;
};

/// Integer rectangle at the polygon's extreme points: x0 = floor(min x),
/// x1 = ceil(max x), likewise for y.
struct ExtremeRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

ExtremeRect extreme_rect(const Polygon& polygon);

/// Squares the extreme-point rectangle by extending its shorter sides
/// symmetrically; with odd padding the extra pixel goes after (right/bottom).
/// Throws GeometryError for fewer than 3 vertices or zero extent in both axes.
SquareBox squarify(const Polygon& polygon);
SquareBox squarify(const ExtremeRect& rect);

/// The four corners of a box as a polygon.
Polygon corners(const SquareBox& box);

/// The box's square region of `image`, with zeros wherever it leaves the
/// image, as floats in [0,1]. Throws GeometryError if the box misses the
/// image entirely.
ImageF pad_region(const ImageU8& image, const SquareBox& box);

/// Bilinear resize with pixel-center alignment; same-size is an exact copy.
ImageF resize_bilinear(const ImageF& image, int width, int height);

/// pad_region followed by a bilinear resize to 224x224.
ImageF extract_crop(const ImageU8& image, const SquareBox& box);

enum class GridSize { ThreeByThree = 3, FiveByFive = 5 };

struct GridCell {
  GridSize grid = GridSize::ThreeByThree;
  int row = 0;
  int col = 0;

  int k() const { return int(grid); }
  int flat() const { return row * k() + col; }
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Half-open cells, the last row/column closed. Throws GeometryError when
/// the centroid is outside [0,1]^2.
GridCell grid_cell(const Point& centroid, GridSize grid);

/// Arithmetic mean of the vertices.
Point vertex_centroid(const Polygon& polygon);

struct AverageNormal {
  double nx = 0, ny = 0, nz = 1;
  Eigen::Vector3d vec() const { return {nx, ny, nz}; }
};

/// Channel value in [0,255] to a normal component in [-1,1].
inline double decode_normal_component(double c) { return 2.0 * c / 255.0 - 1.0; }
inline double encode_normal_component(double n) { return (n + 1.0) * 255.0 / 2.0; }

/// Pixels whose centers fall inside the polygon (even-odd rule), clipped to
/// the image.
std::vector<Eigen::Index> polygon_pixels(const Polygon& polygon, int width, int height);

/// Sum of decoded normals over the given pixel indices, not normalized.
Eigen::Vector3d normal_sum(const ImageU8& normal_map, const std::vector<Eigen::Index>& pixels);

/// Decodes each pixel (x in red, y in green, z in blue), averages over the
/// region and renormalizes. Throws GeometryError for an empty region or a
/// zero-length mean.
AverageNormal average_normal(const ImageU8& normal_map, const Polygon& region);
AverageNormal average_normal(const ImageU8& normal_map, const std::vector<Eigen::Index>& pixels);
AverageNormal normalize_normal(const Eigen::Vector3d& sum);

}  // namespace wedge
