#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <string>

#include <json.hpp>

#include "wedge/augment.hpp"
#include "wedge/corpus.hpp"
#include "wedge/nn/backbone.hpp"

namespace wedge {

/// Anything that maps prepared 224x224 tensors to a batch x classes logit
/// matrix. Evaluation only needs this, so stubs can stand in for models.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int n_classes() const = 0;
  virtual Eigen::MatrixXf predict_logits(std::span<const ImageF> prepared) const = 0;
};

struct ModelInfo {
  nn::BackboneKind backbone = nn::BackboneKind::ResNet50;
  Vocabulary vocabulary;
  Normalization normalization;
  std::optional<Visualization> visualization;
  std::set<std::string> proveniences;  // training provenience set
  std::string init = "random";         // or the pretrained checkpoint used
  nlohmann::json config = nlohmann::json::object();  // echo of the training config(s)
};

/// Trained (or freshly initialized) classifier: backbone, 2048-d pooled
/// features, linear head over the vocabulary. Inference is const and safe
/// to call concurrently.
class Model final : public Classifier {
 public:
  Model(nn::BackboneKind backbone, Vocabulary vocabulary, std::uint64_t init_seed);
  /// Zero weights; callers fill them (checkpoint loading, cloning).
  explicit Model(ModelInfo info);

  int n_classes() const override { return info_.vocabulary.size(); }
  Eigen::MatrixXf predict_logits(std::span<const ImageF> prepared) const override;
  /// batch x 2048
  Eigen::MatrixXf extract_features(std::span<const ImageF> prepared) const;

  const ModelInfo& info() const { return info_; }
  ModelInfo& info() { return info_; }
  std::string fingerprint() const { return info_.vocabulary.fingerprint(); }
  nn::Network<float>& network() { return *net_; }
  const nn::Network<float>& network() const { return *net_; }

  Model clone() const;

  /// Copies trunk parameters and buffers whose names and shapes match;
  /// returns how many tensors were copied.
  int load_backbone_from(const Model& other);

 private:
  ModelInfo info_;
  std::unique_ptr<nn::Network<float>> net_;
};

/// Stacks same-sized prepared images into one network input.
nn::Tensor<float> to_batch(std::span<const ImageF> prepared);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Single-file archive: magic, format version, JSON header (model info,
/// tensor table), raw float32 tensors and a trailing FNV-1a checksum.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Throws CheckpointError for unreadable or damaged files and
/// FingerprintMismatch when `expected` is given and its fingerprint differs.
Model load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected = nullptr);

/// Header fields only (no tensors are materialized).
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace wedge
