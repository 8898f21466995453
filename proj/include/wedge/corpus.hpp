#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wedge/geometry.hpp"

namespace wedge {

/// The twelve renderings prepared for every tablet surface. ColorA..ColorH
/// are the directional-light images; the source material names only seven
/// letters in one place and shows ColorH elsewhere, so all eight are accepted.
enum class Visualization {
  Color00,
  ColorA,
  ColorB,
  ColorC,
  ColorD,
  ColorE,
  ColorF,
  ColorG,
  ColorH,
  NormalMap,
  SketchA,
  SketchB,
};

inline constexpr std::array<Visualization, 12> kAllVisualizations = {
    Visualization::Color00, Visualization::ColorA,    Visualization::ColorB,  Visualization::ColorC,
    Visualization::ColorD,  Visualization::ColorE,    Visualization::ColorF,  Visualization::ColorG,
    Visualization::ColorH,  Visualization::NormalMap, Visualization::SketchA, Visualization::SketchB,
};

std::string_view to_string(Visualization v);
std::optional<Visualization> parse_visualization(std::string_view tag);

enum class Side { Front, Back, Top, Bottom, Left, Right };

std::string_view to_string(Side s);
std::optional<Side> parse_side(std::string_view s);

struct SignClass {
  std::string name;
  std::optional<std::string> unicode_codepoint;
  int index = 0;
};

/// Class vocabulary with indices assigned by sorted name.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  int size() const { return int(classes_.size()); }
  bool empty() const { return classes_.empty(); }
  const std::vector<SignClass>& classes() const { return classes_; }
  const SignClass& operator[](int index) const { return classes_.at(std::size_t(index)); }
  std::optional<int> index_of(std::string_view name) const;
  int require(std::string_view name) const;
  std::vector<std::string> names() const;
  /// FNV-1a over the ordered class names, as 16 hex digits.
  std::string fingerprint() const;

  void set_codepoint(std::string_view name, std::string codepoint);

 private:
  std::vector<SignClass> classes_;
};

struct SurfaceRecord {
  std::string tablet_id;
  Side side = Side::Front;
  std::string provenience;
  int width_px = 0;
  int height_px = 0;
  std::map<Visualization, std::filesystem::path> image_paths;  // absolute

  /// "tablet_id:side", the key used by the service and reports.
  std::string id() const;
  bool has(Visualization v) const { return image_paths.contains(v); }
  std::vector<Visualization> available() const;
};

struct AnnotationRecord {
  std::string id;
  std::size_t surface = 0;  // index into CorpusManifest::surfaces
  Polygon polygon;
  std::string sign_class;
};

struct CorpusManifest {
  std::filesystem::path root;
  std::vector<std::string> proveniences;  // declared set, sorted
  std::vector<SurfaceRecord> surfaces;
  std::vector<AnnotationRecord> annotations;
  Vocabulary vocabulary;

  const SurfaceRecord& surface_of(const AnnotationRecord& a) const { return surfaces.at(a.surface); }
  std::optional<std::size_t> find_surface(std::string_view surface_id) const;
  std::optional<std::size_t> find_annotation(std::string_view id) const;
};

/// Loads `root/manifest.json`, checks every image file, every polygon and
/// every tag. Throws ValidationError naming the offending file or record.
/// `check_dimensions` additionally decodes each image to compare its size
/// with the declared one.
CorpusManifest load_manifest(const std::filesystem::path& root, bool check_dimensions = false);

/// Serializes a manifest back to `root/manifest.json` form (paths relative
/// to the manifest root).
std::string manifest_json(const CorpusManifest& manifest);

/// Ordered subset of a manifest's annotations; the vocabulary and surfaces
/// stay those of the parent.
struct ManifestView {
  const CorpusManifest* manifest = nullptr;
  std::vector<std::size_t> annotations;

  std::size_t size() const { return annotations.size(); }
  bool empty() const { return annotations.empty(); }
  const AnnotationRecord& operator[](std::size_t i) const { return manifest->annotations.at(annotations[i]); }
};

ManifestView full_view(const CorpusManifest& manifest);

/// Annotations on surfaces whose provenience is in `proveniences` (all when
/// empty). Throws ValidationError listing retained surfaces that lack
/// `visualization`.
ManifestView filter(const CorpusManifest& manifest, const std::set<std::string>& proveniences,
                    Visualization visualization);

ManifestView select_ids(const CorpusManifest& manifest, const std::vector<std::string>& ids);

inline constexpr int kDefaultMinInstances = 20;

struct DatasetSplit {
  std::uint64_t seed = 0;
  int min_instances = kDefaultMinInstances;
  std::vector<std::string> train_ids;  // sorted
  std::vector<std::string> test_ids;   // sorted
  std::set<std::string> included_classes;
  std::vector<std::string> excluded_classes;  // sorted; classes below threshold
};

/// Number of held-out examples for a class with `count` instances.
int test_count(int count);

/// Per-class uniform sampling without replacement, seeded. Classes with
/// fewer than `min_instances` annotations are excluded and reported.
DatasetSplit build_split(const ManifestView& view, std::uint64_t seed, int min_instances = kDefaultMinInstances);
DatasetSplit build_split(const CorpusManifest& manifest, std::uint64_t seed,
                         int min_instances = kDefaultMinInstances);

std::string split_json(const DatasetSplit& split);
DatasetSplit parse_split_json(std::string_view text);
void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

struct FrequencyHistogram {
  std::map<std::string, int> counts;
  int total = 0;

  /// Fraction of annotations in classes with at least `min_instances`.
  double coverage(int min_instances = kDefaultMinInstances) const;
  int classes_at_least(int min_instances) const;
};

FrequencyHistogram frequency_histogram(const CorpusManifest& manifest);
FrequencyHistogram frequency_histogram(const ManifestView& view);

/// Vertex centroid normalized by the surface dimensions, clamped to [0,1].
Point normalized_centroid(const CorpusManifest& manifest, const AnnotationRecord& a);

}  // namespace wedge
