#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "wedge/corpus.hpp"
#include "wedge/geometry.hpp"

namespace wedge {

struct SampleMeta {
  std::string annotation_id;
  std::string sign_class;
  std::string surface_id;
  std::string provenience;
  Side side = Side::Front;
  Visualization visualization = Visualization::Color00;
  Point centroid = Point::Zero();  // normalized to the surface, in [0,1]^2
};

/// One sign ready for the network: a 224x224 crop in [0,1] (normalization
/// happens in prepare_eval / prepare_train), its class index and metadata.
struct CropSample {
  ImageF pixels;
  int label = -1;
  SampleMeta meta;
};

/// Decoded surface images keyed by path; safe for concurrent use.
class ImageCache {
 public:
  std::shared_ptr<const ImageU8> get(const std::filesystem::path& path);
  void clear();

 private:
  std::mutex mutex_;
  std::map<std::filesystem::path, std::shared_ptr<const ImageU8>> images_;
};

/// Squarifies each annotation's polygon and crops it from the surface's
/// `visualization` image. Labels index `vocabulary`.
std::vector<CropSample> build_samples(const ManifestView& view, Visualization visualization,
                                      const Vocabulary& vocabulary, ImageCache& cache);

std::vector<CropSample> build_samples(const CorpusManifest& manifest, const std::vector<std::string>& ids,
                                      Visualization visualization, ImageCache& cache);

std::vector<int> labels_of(std::span<const CropSample> samples);

}  // namespace wedge
