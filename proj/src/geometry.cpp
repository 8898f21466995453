#include "wedge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "wedge/error.hpp"

namespace wedge {

ExtremeRect extreme_rect(const Polygon& polygon) {
  if (polygon.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
  double minx = polygon[0].x(), maxx = minx, miny = polygon[0].y(), maxy = miny;
  for (const auto& p : polygon) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y())) throw GeometryError("polygon vertex is not finite");
    minx = std::min(minx, p.x());
    maxx = std::max(maxx, p.x());
    miny = std::min(miny, p.y());
    maxy = std::max(maxy, p.y());
  }
  return {int(std::floor(minx)), int(std::floor(miny)), int(std::ceil(maxx)), int(std::ceil(maxy))};
}

SquareBox squarify(const ExtremeRect& r) {
  const int w = r.width(), h = r.height();
  if (w <= 0 && h <= 0) throw GeometryError("polygon has zero extent in both axes");
  const int side = std::max(w, h);
  // floor division keeps the extra pixel of odd padding after the rectangle
  const int pad_x = (side - w) / 2;
  const int pad_y = (side - h) / 2;
  return {r.x0 - pad_x, r.y0 - pad_y, side};
}

SquareBox squarify(const Polygon& polygon) { return squarify(extreme_rect(polygon)); }

Polygon corners(const SquareBox& box) {
  return {Point(box.x0, box.y0), Point(box.x1(), box.y0), Point(box.x1(), box.y1()), Point(box.x0, box.y1())};
}

ImageF pad_region(const ImageU8& image, const SquareBox& box) {
  if (box.side <= 0) throw GeometryError("box side must be positive");
  const int x0 = std::max(box.x0, 0), y0 = std::max(box.y0, 0);
  const int x1 = std::min(box.x1(), image.width), y1 = std::min(box.y1(), image.height);
  if (x0 >= x1 || y0 >= y1) throw GeometryError("box lies entirely outside the image");
  ImageF out(box.side, box.side);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      out.at(x - box.x0, y - box.y0) = image.at(x, y).cast<float>() / 255.0f;
    }
  }
  return out;
}

ImageF resize_bilinear(const ImageF& image, int width, int height) {
  if (width == image.width && height == image.height) return image;
  ImageF out(width, height);
  const double sx = double(image.width) / width;
  const double sy = double(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const float wy = float(fy - y0);
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const float wx = float(fx - x0);
      out.at(x, y) = (1 - wy) * ((1 - wx) * image.at(x0, y0) + wx * image.at(x1, y0)) +
                     wy * ((1 - wx) * image.at(x0, y1) + wx * image.at(x1, y1));
    }
  }
  return out;
}

ImageF extract_crop(const ImageU8& image, const SquareBox& box) {
  return resize_bilinear(pad_region(image, box), kCropSize, kCropSize);
}

GridCell grid_cell(const Point& c, GridSize grid) {
  if (!(c.x() >= 0.0 && c.x() <= 1.0 && c.y() >= 0.0 && c.y() <= 1.0)) {
    throw GeometryError("centroid outside the unit square");
  }
  const int k = int(grid);
  GridCell cell;
  cell.grid = grid;
  cell.row = std::min(int(std::floor(c.y() * k)), k - 1);
  cell.col = std::min(int(std::floor(c.x() * k)), k - 1);
  return cell;
}

Point vertex_centroid(const Polygon& polygon) {
  if (polygon.empty()) throw GeometryError("empty polygon has no centroid");
  Point sum = Point::Zero();
  for (const auto& p : polygon) sum += p;
  return sum / double(polygon.size());
}

std::vector<Eigen::Index> polygon_pixels(const Polygon& polygon, int width, int height) {
  std::vector<Eigen::Index> out;
  if (polygon.size() < 3) return out;
  const auto r = extreme_rect(polygon);
  const int x0 = std::max(r.x0, 0), y0 = std::max(r.y0, 0);
  const int x1 = std::min(r.x1, width), y1 = std::min(r.y1, height);
  const std::size_t n = polygon.size();
  for (int y = y0; y < y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x < x1; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = polygon[i];
        const Point& b = polygon[j];
        if ((a.y() > py) != (b.y() > py)) {
          const double xi = a.x() + (py - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
          if (px < xi) inside = !inside;
        }
      }
      if (inside) out.push_back(Eigen::Index(y) * width + x);
    }
  }
  return out;
}

Eigen::Vector3d normal_sum(const ImageU8& normal_map, const std::vector<Eigen::Index>& pixels) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto i : pixels) {
    const auto c = normal_map.pixels.col(i);
    sum += Eigen::Vector3d(decode_normal_component(c(0)), decode_normal_component(c(1)),
                           decode_normal_component(c(2)));
  }
  return sum;
}

AverageNormal normalize_normal(const Eigen::Vector3d& sum) {
  const double len = sum.norm();
  if (!(len > 1e-12)) throw GeometryError("average normal has zero length");
  const Eigen::Vector3d n = sum / len;
  return {n.x(), n.y(), n.z()};
}

AverageNormal average_normal(const ImageU8& normal_map, const std::vector<Eigen::Index>& pixels) {
  if (pixels.empty()) throw GeometryError("normal region is empty");
  return normalize_normal(normal_sum(normal_map, pixels));
}

AverageNormal average_normal(const ImageU8& normal_map, const Polygon& region) {
  return average_normal(normal_map, polygon_pixels(region, normal_map.width, normal_map.height));
}

}  // namespace wedge
