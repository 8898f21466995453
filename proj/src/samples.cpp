#include "wedge/samples.hpp"

#include "wedge/error.hpp"
#include "wedge/image.hpp"

namespace wedge {

std::shared_ptr<const ImageU8> ImageCache::get(const std::filesystem::path& path) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = images_.find(path); it != images_.end()) return it->second;
  }
  auto image = std::make_shared<const ImageU8>(read_image(path));
  std::lock_guard lock(mutex_);
  return images_.emplace(path, std::move(image)).first->second;
}

void ImageCache::clear() {
  std::lock_guard lock(mutex_);
  images_.clear();
}

std::vector<CropSample> build_samples(const ManifestView& view, Visualization visualization,
                                      const Vocabulary& vocabulary, ImageCache& cache) {
  std::vector<CropSample> out;
  out.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto& a = view[i];
    const auto& surface = view.manifest->surface_of(a);
    const auto path = surface.image_paths.find(visualization);
    if (path == surface.image_paths.end()) {
      throw ValidationError(surface.id(), std::string(to_string(visualization)) + " is not available");
    }
    const auto image = cache.get(path->second);
    CropSample s;
    s.pixels = extract_crop(*image, squarify(a.polygon));
    s.label = vocabulary.index_of(a.sign_class).value_or(-1);
    s.meta.annotation_id = a.id;
    s.meta.sign_class = a.sign_class;
    s.meta.surface_id = surface.id();
    s.meta.provenience = surface.provenience;
    s.meta.side = surface.side;
    s.meta.visualization = visualization;
    s.meta.centroid = normalized_centroid(*view.manifest, a);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<CropSample> build_samples(const CorpusManifest& manifest, const std::vector<std::string>& ids,
                                      Visualization visualization, ImageCache& cache) {
  return build_samples(select_ids(manifest, ids), visualization, manifest.vocabulary, cache);
}

std::vector<int> labels_of(std::span<const CropSample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

}  // namespace wedge
