#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>

namespace wedge {

/// Interleaved 3-channel raster. Column `y * width + x` holds the RGB
/// triple of pixel (x, y), which is also the activation layout used by the
/// network (channels x positions), so a prepared image feeds it directly.
template <typename Scalar>
struct Image {
  using Pixels = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

  int width = 0;
  int height = 0;
  Pixels pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(Pixels::Zero(3, Eigen::Index(w) * h)) {}

  Eigen::Index index(int x, int y) const { return Eigen::Index(y) * width + x; }
  auto at(int x, int y) { return pixels.col(index(x, y)); }
  auto at(int x, int y) const { return pixels.col(index(x, y)); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool empty() const { return width == 0 || height == 0; }
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

ImageU8 read_image(const std::filesystem::path& path);
/// Encodes by extension (.png, .jpg/.jpeg).
void write_image(const std::filesystem::path& path, const ImageU8& image);

ImageF to_float(const ImageU8& image);
ImageU8 to_u8(const ImageF& image);

}  // namespace wedge
