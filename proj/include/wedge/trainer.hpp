#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wedge/augment.hpp"
#include "wedge/corpus.hpp"
#include "wedge/model.hpp"
#include "wedge/samples.hpp"

namespace wedge {

struct TrainConfig {
  nn::BackboneKind backbone = nn::BackboneKind::ResNet50;
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-5;
  AugmentPolicy augment;
  Normalization normalization;
  std::uint64_t seed = 0;
  /// Checkpoint whose trunk initializes the backbone; random init otherwise.
  std::optional<std::filesystem::path> pretrained;

  void validate() const;
};

/// Continued training without augmentation at a decaying low rate.
struct FineTuneConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr_start = 5e-4;
  double lr_end = 1e-7;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FineTuneConfig& c);
FineTuneConfig fine_tune_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double loss = 0;      // mean over samples
  double accuracy = 0;  // argmax accuracy on the (augmented) training batches
};

struct TrainReport {
  std::string stage;  // "train" or "fine_tune"
  nlohmann::json config;
  std::string init;
  std::vector<EpochStats> epochs;
  double train_top1 = 0;
  double train_top5 = 0;
  std::optional<double> test_top1;
  std::optional<double> test_top5;
  double wall_seconds = 0;
  std::string checkpoint;

  std::vector<double> lr_trace() const;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains a fresh model on crops labelled against `vocabulary`. When
/// `test` is non-empty the report carries its top-1/top-5.
TrainResult train(std::span<const CropSample> train_set, std::span<const CropSample> test, const Vocabulary& vocabulary,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Crops the split's train/test annotations from `visualization` and
/// trains on the manifest's global vocabulary.
TrainResult train(const CorpusManifest& manifest, const DatasetSplit& split, Visualization visualization,
                  const TrainConfig& config, ImageCache& cache, const EpochCallback& on_epoch = {});

/// Continues training a copy of `model`. Throws FingerprintMismatch when
/// `vocabulary` differs from the model's.
TrainResult fine_tune(const Model& model, std::span<const CropSample> train_set, std::span<const CropSample> test,
                      const Vocabulary& vocabulary, const FineTuneConfig& config, const EpochCallback& on_epoch = {});

/// Samples whose provenience is in `proveniences` (all when empty).
std::vector<CropSample> restrict_to(std::span<const CropSample> samples, const std::set<std::string>& proveniences);

}  // namespace wedge
