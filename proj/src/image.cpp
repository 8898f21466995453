#include "wedge/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "wedge/error.hpp"

namespace wedge {

ImageU8 read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError(path.string(), "cannot decode image");
  ImageU8 out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      auto px = out.at(x, y);
      px(0) = row[x][2];
      px(1) = row[x][1];
      px(2) = row[x][0];
    }
  }
  return out;
}

void write_image(const std::filesystem::path& path, const ImageU8& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const auto px = image.at(x, y);
      row[x] = cv::Vec3b(px(2), px(1), px(0));
    }
  }
  std::vector<int> params;
  const auto ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") params = {cv::IMWRITE_JPEG_QUALITY, 95};
  if (!cv::imwrite(path.string(), bgr, params)) throw Error("cannot write image " + path.string());
}

ImageF to_float(const ImageU8& image) {
  ImageF out;
  out.width = image.width;
  out.height = image.height;
  out.pixels = image.pixels.cast<float>() / 255.0f;
  return out;
}

ImageU8 to_u8(const ImageF& image) {
  ImageU8 out;
  out.width = image.width;
  out.height = image.height;
  out.pixels = (image.pixels.array() * 255.0f).round().max(0.0f).min(255.0f).cast<std::uint8_t>().matrix();
  return out;
}

}  // namespace wedge
