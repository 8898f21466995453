#include "wedge/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "wedge/error.hpp"

namespace wedge {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'W', 'E', 'D', 'G', 'E', 'C', 'K', 'P'};
constexpr int kInferenceChunk = 16;

std::uint64_t fnv1a_bytes(const char* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

json info_to_json(const ModelInfo& info) {
  json j;
  j["backbone"] = std::string(nn::to_string(info.backbone));
  j["classes"] = info.vocabulary.names();
  j["fingerprint"] = info.vocabulary.fingerprint();
  j["normalization"] = {{"mean", info.normalization.mean}, {"std", info.normalization.std}};
  j["visualization"] = info.visualization ? json(std::string(to_string(*info.visualization))) : json(nullptr);
  j["proveniences"] = std::vector<std::string>(info.proveniences.begin(), info.proveniences.end());
  j["init"] = info.init;
  j["config"] = info.config;
  return j;
}

ModelInfo info_from_json(const json& j) {
  ModelInfo info;
  const auto kind = nn::parse_backbone(j.at("backbone").get<std::string>());
  if (!kind) throw CheckpointError("corrupt checkpoint: unknown backbone");
  info.backbone = *kind;
  info.vocabulary = Vocabulary(j.at("classes").get<std::vector<std::string>>());
  if (info.vocabulary.fingerprint() != j.at("fingerprint").get<std::string>()) {
    throw CheckpointError("corrupt checkpoint: stored fingerprint does not match stored classes");
  }
  info.normalization.mean = j.at("normalization").at("mean").get<std::array<float, 3>>();
  info.normalization.std = j.at("normalization").at("std").get<std::array<float, 3>>();
  if (!j.at("visualization").is_null()) info.visualization = parse_visualization(j.at("visualization").get<std::string>());
  for (const auto& p : j.at("proveniences")) info.proveniences.insert(p.get<std::string>());
  info.init = j.value("init", "random");
  info.config = j.value("config", json::object());
  return info;
}

}  // namespace

Model::Model(nn::BackboneKind backbone, Vocabulary vocabulary, std::uint64_t init_seed) {
  info_.backbone = backbone;
  info_.vocabulary = std::move(vocabulary);
  net_ = std::make_unique<nn::Network<float>>(backbone, info_.vocabulary.size());
  Rng rng(stream_seed(init_seed, 0x1417));
  net_->init(rng);
}

Model::Model(ModelInfo info) : info_(std::move(info)) {
  net_ = std::make_unique<nn::Network<float>>(info_.backbone, info_.vocabulary.size());
}

nn::Tensor<float> to_batch(std::span<const ImageF> prepared) {
  if (prepared.empty()) throw ShapeError("empty batch");
  const int w = prepared.front().width, h = prepared.front().height;
  nn::Tensor<float> t(3, int(prepared.size()), h, w);
  const Eigen::Index plane = Eigen::Index(w) * h;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    if (prepared[i].width != w || prepared[i].height != h) throw ShapeError("batch images differ in size");
    t.data.middleCols(Eigen::Index(i) * plane, plane) = prepared[i].pixels;
  }
  return t;
}

namespace {

template <typename F>
Eigen::MatrixXf chunked(std::span<const ImageF> prepared, int width, F&& f) {
  for (const auto& img : prepared) {
    if (img.width != kCropSize || img.height != kCropSize) {
      throw ShapeError("expected " + std::to_string(kCropSize) + "x" + std::to_string(kCropSize) + " input, got " +
                       std::to_string(img.width) + "x" + std::to_string(img.height));
    }
  }
  Eigen::MatrixXf out(Eigen::Index(prepared.size()), width);
  for (std::size_t i = 0; i < prepared.size(); i += kInferenceChunk) {
    const auto n = std::min<std::size_t>(kInferenceChunk, prepared.size() - i);
    out.middleRows(Eigen::Index(i), Eigen::Index(n)) = f(to_batch(prepared.subspan(i, n))).transpose();
  }
  return out;
}

}  // namespace

Eigen::MatrixXf Model::predict_logits(std::span<const ImageF> prepared) const {
  return chunked(prepared, n_classes(), [&](const nn::Tensor<float>& t) { return net_->logits(t); });
}

Eigen::MatrixXf Model::extract_features(std::span<const ImageF> prepared) const {
  return chunked(prepared, nn::kFeatureDim, [&](const nn::Tensor<float>& t) { return net_->features(t); });
}

Model Model::clone() const {
  Model copy(info_);
  auto src = const_cast<nn::Network<float>&>(*net_).parameters();
  auto dst = copy.net_->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  auto sb = const_cast<nn::Network<float>&>(*net_).buffers();
  auto db = copy.net_->buffers();
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i].value = *sb[i].value;
  for (auto* p : dst) p->zero_grad();
  return copy;
}

int Model::load_backbone_from(const Model& other) {
  std::map<std::string, const Eigen::MatrixXf*> source;
  auto& net = const_cast<nn::Network<float>&>(*other.net_);
  for (auto* p : net.parameters()) source[p->name] = &p->value;
  for (auto& b : net.buffers()) source[b.name] = b.value;
  int copied = 0;
  auto assign = [&](const std::string& name, Eigen::MatrixXf& value) {
    if (name.rfind("trunk.", 0) != 0) return;
    const auto it = source.find(name);
    if (it == source.end() || it->second->rows() != value.rows() || it->second->cols() != value.cols()) return;
    value = *it->second;
    ++copied;
  };
  for (auto* p : net_->parameters()) assign(p->name, p->value);
  for (auto& b : net_->buffers()) assign(b.name, *b.value);
  return copied;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto& net = const_cast<nn::Network<float>&>(model.network());
  std::vector<std::pair<std::string, const Eigen::MatrixXf*>> tensors;
  for (auto* p : net.parameters()) tensors.emplace_back(p->name, &p->value);
  for (auto& b : net.buffers()) tensors.emplace_back(b.name, b.value);

  json header = info_to_json(model.info());
  header["tensors"] = json::array();
  for (const auto& [name, m] : tensors) header["tensors"].push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  const std::string text = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof kMagic);
  auto put = [&](const auto& v) { blob.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(kCheckpointVersion);
  put(std::uint64_t(text.size()));
  blob += text;
  for (const auto& [_, m] : tensors) blob.append(reinterpret_cast<const char*>(m->data()), std::size_t(m->size()) * sizeof(float));
  put(fnv1a_bytes(blob.data(), blob.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

namespace {

struct RawCheckpoint {
  json header;
  std::string blob;
  std::size_t tensor_offset = 0;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RawCheckpoint raw;
  raw.blob = ss.str();
  const std::string& b = raw.blob;
  const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (b.size() < fixed + sizeof(std::uint64_t) || std::memcmp(b.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": bad magic or truncated");
  }
  std::uint32_t version;
  std::memcpy(&version, b.data() + sizeof kMagic, sizeof version);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t header_len;
  std::memcpy(&header_len, b.data() + sizeof kMagic + sizeof version, sizeof header_len);
  if (header_len > b.size() - fixed) throw CheckpointError("corrupt checkpoint " + path.string() + ": truncated header");
  std::uint64_t stored;
  std::memcpy(&stored, b.data() + b.size() - sizeof stored, sizeof stored);
  if (fnv1a_bytes(b.data(), b.size() - sizeof stored) != stored) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": checksum mismatch");
  }
  try {
    raw.header = json::parse(b.substr(fixed, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  raw.tensor_offset = fixed + header_len;
  return raw;
}

}  // namespace

json read_checkpoint_header(const std::filesystem::path& path) {
  auto h = read_raw(path).header;
  h.erase("tensors");
  return h;
}

Model load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected) {
  const RawCheckpoint raw = read_raw(path);
  ModelInfo info;
  try {
    info = info_from_json(raw.header);
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  if (expected && expected->fingerprint() != info.vocabulary.fingerprint()) {
    throw FingerprintMismatch("checkpoint vocabulary fingerprint " + info.vocabulary.fingerprint() +
                              " does not match " + expected->fingerprint());
  }
  Model model(std::move(info));

  std::map<std::string, Eigen::MatrixXf*> slots;
  auto& net = model.network();
  for (auto* p : net.parameters()) slots[p->name] = &p->value;
  for (auto& b : net.buffers()) slots[b.name] = b.value;

  const auto& table = raw.header.at("tensors");
  if (table.size() != slots.size()) throw CheckpointError("corrupt checkpoint: tensor count does not match backbone");
  std::size_t offset = raw.tensor_offset;
  const std::size_t end = raw.blob.size() - sizeof(std::uint64_t);
  for (const auto& t : table) {
    const auto it = slots.find(t.at("name").get<std::string>());
    if (it == slots.end()) throw CheckpointError("corrupt checkpoint: unexpected tensor " + t.at("name").get<std::string>());
    Eigen::MatrixXf& m = *it->second;
    if (m.rows() != t.at("rows").get<Eigen::Index>() || m.cols() != t.at("cols").get<Eigen::Index>()) {
      throw CheckpointError("corrupt checkpoint: shape mismatch for " + it->first);
    }
    const std::size_t bytes = std::size_t(m.size()) * sizeof(float);
    if (offset + bytes > end) throw CheckpointError("corrupt checkpoint: truncated tensor data");
    std::memcpy(m.data(), raw.blob.data() + offset, bytes);
    offset += bytes;
  }
  if (offset != end) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return model;
}

}  // namespace wedge
