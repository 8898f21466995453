#include "wedge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "wedge/error.hpp"
#include "wedge/image.hpp"
#include "wedge/rng.hpp"

namespace wedge {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 12> kVizTags = {"Color00", "ColorA", "ColorB",    "ColorC",  "ColorD",  "ColorE",
                                                       "ColorF",  "ColorG", "ColorH",    "NormalMap", "SketchA", "SketchB"};
constexpr std::array<std::string_view, 6> kSideNames = {"front", "back", "top", "bottom", "left", "right"};

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 15];
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T field(const json& j, const char* key, const std::string& locus) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(locus, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(locus, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string_view to_string(Visualization v) { return kVizTags[std::size_t(v)]; }

std::optional<Visualization> parse_visualization(std::string_view tag) {
  for (std::size_t i = 0; i < kVizTags.size(); ++i) {
    if (kVizTags[i] == tag) return Visualization(i);
  }
  return std::nullopt;
}

std::string_view to_string(Side s) { return kSideNames[std::size_t(s)]; }

std::optional<Side> parse_side(std::string_view s) {
  for (std::size_t i = 0; i < kSideNames.size(); ++i) {
    if (kSideNames[i] == s) return Side(i);
  }
  return std::nullopt;
}

Vocabulary::Vocabulary(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  classes_.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) classes_.push_back({std::move(names[i]), std::nullopt, int(i)});
}

std::optional<int> Vocabulary::index_of(std::string_view name) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), name,
                             [](const SignClass& c, std::string_view n) { return c.name < n; });
  if (it == classes_.end() || it->name != name) return std::nullopt;
  return it->index;
}

int Vocabulary::require(std::string_view name) const {
  if (auto i = index_of(name)) return *i;
  throw Error("class '" + std::string(name) + "' is not in the vocabulary");
}

std::vector<std::string> Vocabulary::names() const {
  std::vector<std::string> out;
  out.reserve(classes_.size());
  for (const auto& c : classes_) out.push_back(c.name);
  return out;
}

std::string Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& c : classes_) {
    h = fnv1a(c.name, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return hex64(h);
}

void Vocabulary::set_codepoint(std::string_view name, std::string codepoint) {
  if (auto i = index_of(name)) classes_[std::size_t(*i)].unicode_codepoint = std::move(codepoint);
}

std::string SurfaceRecord::id() const { return tablet_id + ":" + std::string(to_string(side)); }

std::vector<Visualization> SurfaceRecord::available() const {
  std::vector<Visualization> out;
  for (const auto& [v, _] : image_paths) out.push_back(v);
  return out;
}

std::optional<std::size_t> CorpusManifest::find_surface(std::string_view surface_id) const {
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (surfaces[i].id() == surface_id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> CorpusManifest::find_annotation(std::string_view id) const {
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].id == id) return i;
  }
  return std::nullopt;
}

CorpusManifest load_manifest(const std::filesystem::path& root, bool check_dimensions) {
  const auto manifest_path = root / "manifest.json";
  const std::string locus = manifest_path.string();
  json doc;
  try {
    doc = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(locus, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError(locus, "top level must be an object");

  CorpusManifest m;
  m.root = root;

  std::set<std::string> declared;
  const bool has_declared = doc.contains("proveniences");
  if (has_declared) {
    for (const auto& p : field<std::vector<std::string>>(doc, "proveniences", locus)) declared.insert(p);
  }

  std::map<std::string, std::size_t> surface_index;
  const json surfaces = doc.value("surfaces", json::array());
  if (!surfaces.is_array()) throw ValidationError(locus, "'surfaces' must be an array");
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    const auto& js = surfaces[i];
    const std::string sl = locus + ": surfaces[" + std::to_string(i) + "]";
    SurfaceRecord s;
    s.tablet_id = field<std::string>(js, "tablet_id", sl);
    const auto side = parse_side(field<std::string>(js, "side", sl));
    if (!side) throw ValidationError(sl, "unknown side '" + js.at("side").get<std::string>() + "'");
    s.side = *side;
    s.provenience = field<std::string>(js, "provenience", sl);
    if (has_declared && !declared.contains(s.provenience)) {
      throw ValidationError(sl, "provenience '" + s.provenience + "' is not declared");
    }
    s.width_px = field<int>(js, "width_px", sl);
    s.height_px = field<int>(js, "height_px", sl);
    if (s.width_px <= 0 || s.height_px <= 0) throw ValidationError(sl, "image dimensions must be positive");
    const json images = js.value("images", json::object());
    if (!images.is_object()) throw ValidationError(sl, "'images' must be an object");
    for (const auto& [tag, rel] : images.items()) {
      const auto viz = parse_visualization(tag);
      if (!viz) throw ValidationError(sl, "unknown visualization tag '" + tag + "'");
      if (!rel.is_string()) throw ValidationError(sl, "image path for " + tag + " must be a string");
      const auto path = root / rel.get<std::string>();
      if (!std::filesystem::is_regular_file(path)) throw ValidationError(path.string(), "missing image file (" + s.id() + ", " + tag + ")");
      if (check_dimensions) {
        const auto img = read_image(path);
        if (img.width != s.width_px || img.height != s.height_px) {
          throw ValidationError(path.string(), "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                                   ", declared " + std::to_string(s.width_px) + "x" +
                                                   std::to_string(s.height_px));
        }
      }
      s.image_paths[*viz] = path;
    }
    if (!surface_index.emplace(s.id(), m.surfaces.size()).second) {
      throw ValidationError(sl, "duplicate surface " + s.id());
    }
    if (!has_declared) declared.insert(s.provenience);
    m.surfaces.push_back(std::move(s));
  }
  m.proveniences.assign(declared.begin(), declared.end());

  std::unordered_set<std::string> ids;
  std::vector<std::string> class_names;
  const json annotations = doc.value("annotations", json::array());
  if (!annotations.is_array()) throw ValidationError(locus, "'annotations' must be an array");
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& ja = annotations[i];
    const std::string al = locus + ": annotations[" + std::to_string(i) + "]";
    AnnotationRecord a;
    a.id = field<std::string>(ja, "id", al);
    const std::string rl = "annotation '" + a.id + "'";
    if (!ids.insert(a.id).second) throw ValidationError(rl, "duplicate annotation id");
    const std::string tablet = field<std::string>(ja, "tablet_id", rl);
    const std::string side = field<std::string>(ja, "side", rl);
    const auto it = surface_index.find(tablet + ":" + side);
    if (it == surface_index.end()) throw ValidationError(rl, "refers to unknown surface " + tablet + ":" + side);
    a.surface = it->second;
    a.sign_class = field<std::string>(ja, "class", rl);
    if (a.sign_class.empty()) throw ValidationError(rl, "empty class name");
    const auto& surf = m.surfaces[a.surface];
    if (!ja.contains("polygon") || !ja.at("polygon").is_array()) throw ValidationError(rl, "missing polygon");
    for (const auto& v : ja.at("polygon")) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ValidationError(rl, "polygon vertices must be [x, y] number pairs");
      }
      const Point p(v[0].get<double>(), v[1].get<double>());
      if (!(p.x() >= 0 && p.x() <= surf.width_px && p.y() >= 0 && p.y() <= surf.height_px)) {
        std::ostringstream msg;
        msg << "polygon vertex (" << p.x() << ", " << p.y() << ") outside [0, " << surf.width_px << "] x [0, "
            << surf.height_px << "]";
        throw ValidationError(rl, msg.str());
      }
      a.polygon.push_back(p);
    }
    if (a.polygon.size() < 3) throw ValidationError(rl, "polygon needs at least 3 vertices");
    const auto r = extreme_rect(a.polygon);
    if (r.width() <= 0 && r.height() <= 0) throw ValidationError(rl, "polygon has zero extent");
    class_names.push_back(a.sign_class);
    m.annotations.push_back(std::move(a));
  }

  m.vocabulary = Vocabulary(std::move(class_names));
  if (doc.contains("classes") && doc.at("classes").is_array()) {
    for (const auto& c : doc.at("classes")) {
      if (c.is_object() && c.contains("name") && c.contains("unicode")) {
        m.vocabulary.set_codepoint(c.at("name").get<std::string>(), c.at("unicode").get<std::string>());
      }
    }
  }
  return m;
}

std::string manifest_json(const CorpusManifest& m) {
  json doc;
  doc["proveniences"] = m.proveniences;
  doc["surfaces"] = json::array();
  for (const auto& s : m.surfaces) {
    json images = json::object();
    for (const auto& [v, p] : s.image_paths) {
      images[std::string(to_string(v))] = std::filesystem::relative(p, m.root).generic_string();
    }
    doc["surfaces"].push_back({{"tablet_id", s.tablet_id},
                               {"side", std::string(to_string(s.side))},
                               {"provenience", s.provenience},
                               {"width_px", s.width_px},
                               {"height_px", s.height_px},
                               {"images", images}});
  }
  doc["annotations"] = json::array();
  for (const auto& a : m.annotations) {
    json poly = json::array();
    for (const auto& p : a.polygon) poly.push_back({p.x(), p.y()});
    const auto& s = m.surfaces[a.surface];
    doc["annotations"].push_back({{"id", a.id},
                                  {"tablet_id", s.tablet_id},
                                  {"side", std::string(to_string(s.side))},
                                  {"class", a.sign_class},
                                  {"polygon", poly}});
  }
  return doc.dump(1);
}

ManifestView full_view(const CorpusManifest& manifest) {
  ManifestView v{&manifest, {}};
  v.annotations.resize(manifest.annotations.size());
  for (std::size_t i = 0; i < v.annotations.size(); ++i) v.annotations[i] = i;
  return v;
}

ManifestView filter(const CorpusManifest& manifest, const std::set<std::string>& proveniences,
                    Visualization visualization) {
  std::vector<bool> keep(manifest.surfaces.size(), false);
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < manifest.surfaces.size(); ++i) {
    const auto& s = manifest.surfaces[i];
    if (!proveniences.empty() && !proveniences.contains(s.provenience)) continue;
    keep[i] = true;
    if (!s.has(visualization)) missing.push_back(s.id());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("filter", std::string(to_string(visualization)) + " missing for surfaces: " + list);
  }
  ManifestView v{&manifest, {}};
  for (std::size_t i = 0; i < manifest.annotations.size(); ++i) {
    if (keep[manifest.annotations[i].surface]) v.annotations.push_back(i);
  }
  return v;
}

ManifestView select_ids(const CorpusManifest& manifest, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.annotations.size(); ++i) index.emplace(manifest.annotations[i].id, i);
  ManifestView v{&manifest, {}};
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw ValidationError("annotation '" + id + "'", "not in manifest");
    v.annotations.push_back(it->second);
  }
  return v;
}

int test_count(int count) { return std::max(1, (count + 2) / 5); }

DatasetSplit build_split(const ManifestView& view, std::uint64_t seed, int min_instances) {
  std::map<std::string, std::vector<std::string>> by_class;
  for (std::size_t i = 0; i < view.size(); ++i) by_class[view[i].sign_class].push_back(view[i].id);

  DatasetSplit split;
  split.seed = seed;
  split.min_instances = min_instances;
  for (auto& [name, ids] : by_class) {
    const int count = int(ids.size());
    if (count < min_instances) {
      split.excluded_classes.push_back(name);
      continue;
    }
    split.included_classes.insert(name);
    std::sort(ids.begin(), ids.end());
    // one stream per class keeps a class's split independent of the others
    Rng rng(stream_seed(seed, fnv1a(name)));
    shuffle(ids.begin(), ids.end(), rng);
    const int n_test = test_count(count);
    split.test_ids.insert(split.test_ids.end(), ids.begin(), ids.begin() + n_test);
    split.train_ids.insert(split.train_ids.end(), ids.begin() + n_test, ids.end());
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

DatasetSplit build_split(const CorpusManifest& manifest, std::uint64_t seed, int min_instances) {
  return build_split(full_view(manifest), seed, min_instances);
}

std::string split_json(const DatasetSplit& split) {
  json doc;
  doc["seed"] = split.seed;
  doc["min_instances"] = split.min_instances;
  doc["train"] = split.train_ids;
  doc["test"] = split.test_ids;
  doc["excluded_classes"] = split.excluded_classes;
  doc["included_classes"] = std::vector<std::string>(split.included_classes.begin(), split.included_classes.end());
  return doc.dump(2) + "\n";
}

DatasetSplit parse_split_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("split", std::string("invalid JSON: ") + e.what());
  }
  DatasetSplit s;
  s.seed = field<std::uint64_t>(doc, "seed", "split");
  s.min_instances = field<int>(doc, "min_instances", "split");
  s.train_ids = field<std::vector<std::string>>(doc, "train", "split");
  s.test_ids = field<std::vector<std::string>>(doc, "test", "split");
  s.excluded_classes = field<std::vector<std::string>>(doc, "excluded_classes", "split");
  if (doc.contains("included_classes")) {
    for (const auto& c : doc.at("included_classes")) s.included_classes.insert(c.get<std::string>());
  }
  return s;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << split_json(split);
}

DatasetSplit read_split(const std::filesystem::path& path) { return parse_split_json(read_text(path)); }

double FrequencyHistogram::coverage(int min_instances) const {
  if (total == 0) return 0.0;
  int covered = 0;
  for (const auto& [_, c] : counts) {
    if (c >= min_instances) covered += c;
  }
  return double(covered) / double(total);
}

int FrequencyHistogram::classes_at_least(int min_instances) const {
  return int(std::count_if(counts.begin(), counts.end(), [&](const auto& kv) { return kv.second >= min_instances; }));
}

FrequencyHistogram frequency_histogram(const ManifestView& view) {
  FrequencyHistogram h;
  for (std::size_t i = 0; i < view.size(); ++i) ++h.counts[view[i].sign_class];
  h.total = int(view.size());
  return h;
}

FrequencyHistogram frequency_histogram(const CorpusManifest& manifest) { return frequency_histogram(full_view(manifest)); }

Point normalized_centroid(const CorpusManifest& manifest, const AnnotationRecord& a) {
  const auto& s = manifest.surface_of(a);
  const Point c = vertex_centroid(a.polygon);
  return {std::clamp(c.x() / s.width_px, 0.0, 1.0), std::clamp(c.y() / s.height_px, 0.0, 1.0)};
}

}  // namespace wedge
