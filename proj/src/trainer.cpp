#include "wedge/trainer.hpp"

#include <chrono>
#include <numeric>
#include <stdexcept>

#include "wedge/error.hpp"
#include "wedge/evaluator.hpp"
#include "wedge/nn/loss.hpp"
#include "wedge/nn/optim.hpp"

namespace wedge {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch size must be positive");
  if (!(lr > 0 && lr_min > 0 && weight_decay >= 0)) throw std::invalid_argument("learning rates must be positive");
  if (lr_min > lr) throw std::invalid_argument("lr_min must not exceed lr");
  augment.validate();
}

void FineTuneConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch size must be positive");
  if (!(lr_start > 0 && lr_end > 0 && weight_decay >= 0)) throw std::invalid_argument("learning rates must be positive");
  if (!(lr_end < lr_start)) throw std::invalid_argument("lr_end must be below lr_start");
}

json to_json(const TrainConfig& c) {
  json j;
  j["backbone"] = std::string(nn::to_string(c.backbone));
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lr_min"] = c.lr_min;
  j["schedule"] = "cosine";
  j["optimizer"] = "adamw";
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["augment"] = {{"enabled", c.augment.enabled},
                  {"rotation_prob", c.augment.rotation_prob},
                  {"rotation_min_deg", c.augment.rotation_min_deg},
                  {"rotation_max_deg", c.augment.rotation_max_deg},
                  {"perspective_prob", c.augment.perspective_prob},
                  {"perspective_strength", c.augment.perspective_strength}};
  j["normalization"] = {{"mean", c.normalization.mean}, {"std", c.normalization.std}};
  j["pretrained"] = c.pretrained ? json(c.pretrained->string()) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("backbone")) {
    const auto name = j.at("backbone").get<std::string>();
    const auto kind = nn::parse_backbone(name);
    if (!kind) throw std::invalid_argument("unknown backbone '" + name + "'");
    c.backbone = *kind;
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  if (j.value("schedule", std::string("cosine")) != "cosine") throw std::invalid_argument("only the cosine schedule is supported");
  if (j.value("optimizer", std::string("adamw")) != "adamw") throw std::invalid_argument("only adamw is supported");
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    c.augment.enabled = a.value("enabled", c.augment.enabled);
    c.augment.rotation_prob = a.value("rotation_prob", c.augment.rotation_prob);
    c.augment.rotation_min_deg = a.value("rotation_min_deg", c.augment.rotation_min_deg);
    c.augment.rotation_max_deg = a.value("rotation_max_deg", c.augment.rotation_max_deg);
    c.augment.perspective_prob = a.value("perspective_prob", c.augment.perspective_prob);
    c.augment.perspective_strength = a.value("perspective_strength", c.augment.perspective_strength);
  }
  if (j.contains("normalization")) {
    c.normalization.mean = j.at("normalization").at("mean").get<std::array<float, 3>>();
    c.normalization.std = j.at("normalization").at("std").get<std::array<float, 3>>();
  }
  if (j.contains("pretrained") && !j.at("pretrained").is_null()) c.pretrained = j.at("pretrained").get<std::string>();
  c.validate();
  return c;
}

json to_json(const FineTuneConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"lr_start", c.lr_start}, {"lr_end", c.lr_end},
          {"weight_decay", c.weight_decay}, {"seed", c.seed},       {"schedule", "cosine"},   {"augment", false}};
}

FineTuneConfig fine_tune_config_from_json(const json& j) {
  FineTuneConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<double> TrainReport::lr_trace() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.lr);
  return out;
}

std::vector<CropSample> restrict_to(std::span<const CropSample> samples, const std::set<std::string>& proveniences) {
  std::vector<CropSample> out;
  for (const auto& s : samples) {
    if (proveniences.empty() || proveniences.contains(s.meta.provenience)) out.push_back(s);
  }
  return out;
}

namespace {

struct Loop {
  int epochs;
  int batch_size;
  double lr_max;
  double lr_min;
  double weight_decay;
  AugmentPolicy augment;
  Normalization normalization;
  std::uint64_t seed;
};

std::vector<EpochStats> run_loop(Model& model, std::span<const CropSample> data, const Loop& loop,
                                 const EpochCallback& on_epoch) {
  for (const auto& s : data) {
    if (s.label < 0 || s.label >= model.n_classes()) {
      throw Error("sample " + s.meta.annotation_id + " has no class index in the model vocabulary");
    }
  }
  auto& net = model.network();
  nn::AdamWOptions opts;
  opts.weight_decay = loop.weight_decay;
  nn::AdamW<float> optimizer(net.parameters(), opts);

  std::vector<EpochStats> history;
  std::vector<std::size_t> order(data.size());
  std::vector<ImageF> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < loop.epochs; ++epoch) {
    const double lr = nn::cosine_lr(epoch, loop.epochs, loop.lr_max, loop.lr_min);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng shuffler(stream_seed(loop.seed, 0x5417, std::uint64_t(epoch)));
    shuffle(order.begin(), order.end(), shuffler);

    double loss_sum = 0;
    long correct = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(loop.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(loop.batch_size));
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        // the stream depends on (epoch, sample) only, not on batch layout
        Rng rng(stream_seed(loop.seed, 0xA06 + (std::uint64_t(epoch) << 20), idx));
        batch.push_back(prepare_train(data[idx].pixels, loop.augment, rng, loop.normalization));
        labels.push_back(data[idx].label);
      }
      optimizer.zero_grad();
      const auto logits = net.forward_train(to_batch(batch));
      const auto loss = nn::cross_entropy<float>(logits, labels);
      net.backward(loss.grad);
      optimizer.step(lr);
      loss_sum += loss.loss * double(labels.size());
      correct += loss.correct;
    }
    net.release();
    EpochStats stats{epoch, lr, loss_sum / double(data.size()), double(correct) / double(data.size())};
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

void finish_report(TrainReport& report, const Model& model, std::span<const CropSample> train_set,
                   std::span<const CropSample> test, const Normalization& norm) {
  const auto tr = evaluate(model, train_set, norm);
  report.train_top1 = tr.top1;
  report.train_top5 = tr.top5;
  if (!test.empty()) {
    const auto te = evaluate(model, test, norm);
    report.test_top1 = te.top1;
    report.test_top5 = te.top5;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult train(std::span<const CropSample> train_set, std::span<const CropSample> test, const Vocabulary& vocabulary,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw Error("training set is empty");
  const auto t0 = std::chrono::steady_clock::now();

  Model model(config.backbone, vocabulary, config.seed);
  model.info().normalization = config.normalization;
  if (config.pretrained) {
    const Model source = load_checkpoint(*config.pretrained);
    if (source.info().backbone != config.backbone) throw Error("pretrained checkpoint has a different backbone");
    model.load_backbone_from(source);
    model.info().init = "pretrained:" + config.pretrained->string();
  }
  model.info().visualization = train_set.front().meta.visualization;
  for (const auto& s : train_set) model.info().proveniences.insert(s.meta.provenience);
  model.info().config = {{"train", to_json(config)}};

  TrainReport report;
  report.stage = "train";
  report.config = to_json(config);
  report.init = model.info().init;
  report.epochs = run_loop(model,
                           train_set,
                           {config.epochs, config.batch_size, config.lr, config.lr_min, config.weight_decay,
                            config.augment, config.normalization, config.seed},
                           on_epoch);
  finish_report(report, model, train_set, test, config.normalization);
  report.wall_seconds = seconds_since(t0);
  return {std::move(model), std::move(report)};
}

TrainResult train(const CorpusManifest& manifest, const DatasetSplit& split, Visualization visualization,
                  const TrainConfig& config, ImageCache& cache, const EpochCallback& on_epoch) {
  if (split.train_ids.empty()) throw Error("split has no training examples");
  const auto train_set = build_samples(manifest, split.train_ids, visualization, cache);
  const auto test_set = build_samples(manifest, split.test_ids, visualization, cache);
  return train(train_set, test_set, manifest.vocabulary, config, on_epoch);
}

TrainResult fine_tune(const Model& base, std::span<const CropSample> train_set, std::span<const CropSample> test,
                      const Vocabulary& vocabulary, const FineTuneConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (vocabulary.fingerprint() != base.fingerprint()) {
    throw FingerprintMismatch("model vocabulary " + base.fingerprint() + " does not match split vocabulary " +
                              vocabulary.fingerprint());
  }
  if (train_set.empty()) throw Error("fine-tune set is empty");
  const auto t0 = std::chrono::steady_clock::now();

  Model model = base.clone();
  std::set<std::string> provs;
  for (const auto& s : train_set) provs.insert(s.meta.provenience);
  model.info().proveniences = provs;
  model.info().config["fine_tune"] = to_json(config);

  TrainReport report;
  report.stage = "fine_tune";
  report.config = to_json(config);
  report.init = "base:" + base.fingerprint();
  report.epochs = run_loop(model,
                           train_set,
                           {config.epochs, config.batch_size, config.lr_start, config.lr_end, config.weight_decay,
                            AugmentPolicy::disabled(), model.info().normalization, config.seed},
                           on_epoch);
  finish_report(report, model, train_set, test, model.info().normalization);
  report.wall_seconds = seconds_since(t0);
  return {std::move(model), std::move(report)};
}

}  // namespace wedge
