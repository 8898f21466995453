#include "wedge/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wedge/augment.hpp"
#include "wedge/trainer.hpp"

namespace wedge {

int true_class_rank(const Eigen::Ref<const Eigen::VectorXf>& logits, int true_class) {
  if (true_class < 0 || true_class >= logits.size()) throw ShapeError("true class outside the logit vector");
  const float target = logits(true_class);
  int rank = 0;
  for (int j = 0; j < logits.size(); ++j) {
    const float v = logits(j);
    if (v > target || (v == target && j < true_class)) ++rank;
  }
  return rank;
}

RepeatStats repeat_stats(std::span<const double> values) {
  RepeatStats s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / double(values.size() - 1));
  }
  return s;
}

Accuracy accuracy_of(std::span<const ExampleResult> examples) {
  Accuracy a;
  a.support = int(examples.size());
  if (examples.empty()) return a;
  long h1 = 0, h5 = 0;
  for (const auto& e : examples) {
    h1 += e.hit(1);
    h5 += e.hit(5);
  }
  a.top1 = double(h1) / a.support;
  a.top5 = double(h5) / a.support;
  return a;
}

ExampleResult example_from(const SampleMeta& meta, int label) {
  ExampleResult e;
  e.id = meta.annotation_id;
  e.sign_class = meta.sign_class;
  e.label = label;
  e.provenience = meta.provenience;
  e.surface_id = meta.surface_id;
  e.centroid = meta.centroid;
  return e;
}

void EvalAccumulator::add(const Eigen::Ref<const Eigen::VectorXf>& logits, ExampleResult example) {
  example.rank = true_class_rank(logits, example.label);
  examples_.push_back(std::move(example));
}

void EvalAccumulator::add(ExampleResult example) { examples_.push_back(std::move(example)); }

namespace {

template <typename Key>
std::map<std::string, Accuracy> group_accuracy(const std::vector<ExampleResult>& examples, Key key) {
  std::map<std::string, std::vector<ExampleResult>> groups;
  for (const auto& e : examples) groups[key(e)].push_back(e);
  std::map<std::string, Accuracy> out;
  for (const auto& [k, v] : groups) out[k] = accuracy_of(v);
  return out;
}

}  // namespace

EvalReport EvalAccumulator::finish() const {
  EvalReport r;
  const auto overall = accuracy_of(examples_);
  r.top1 = overall.top1;
  r.top5 = overall.top5;
  r.support = overall.support;
  r.per_class = group_accuracy(examples_, [](const ExampleResult& e) { return e.sign_class; });
  r.per_provenience = group_accuracy(examples_, [](const ExampleResult& e) { return e.provenience; });
  r.examples = examples_;
  return r;
}

EvalReport evaluate(const Classifier& model, std::span<const CropSample> samples, const Normalization& norm,
                    int batch_size) {
  if (samples.empty()) throw Error("cannot evaluate an empty test view");
  EvalAccumulator acc;
  std::vector<ImageF> batch;
  for (std::size_t start = 0; start < samples.size(); start += std::size_t(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + std::size_t(batch_size));
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(prepare_eval(samples[i].pixels, norm));
    const Eigen::MatrixXf logits = model.predict_logits(batch);
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = samples[i];
      if (s.label < 0 || s.label >= logits.cols()) throw Error("sample " + s.meta.annotation_id + " has no class index");
      acc.add(logits.row(Eigen::Index(i - start)).transpose(), example_from(s.meta, s.label));
    }
  }
  return acc.finish();
}

EvalReport evaluate_logits(const Eigen::MatrixXf& logits, std::span<const SampleMeta> meta, std::span<const int> labels) {
  if (logits.rows() == 0) throw Error("cannot evaluate an empty test view");
  if (std::size_t(logits.rows()) != meta.size() || meta.size() != labels.size()) throw ShapeError("logit rows, metadata and labels differ in length");
  EvalAccumulator acc;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    acc.add(logits.row(i).transpose(), example_from(meta[std::size_t(i)], labels[std::size_t(i)]));
  }
  return acc.finish();
}

std::uint64_t repeat_seed(std::uint64_t base_seed, int repeat) { return base_seed + std::uint64_t(repeat); }

namespace {

EvalReport aggregate(const std::vector<EvalReport>& runs) {
  EvalReport out;
  if (runs.empty()) return out;
  std::vector<double> t1, t5;
  for (const auto& r : runs) {
    t1.push_back(r.top1);
    t5.push_back(r.top5);
    out.repeats.emplace_back(r.top1, r.top5);
  }
  out.top1_stats = repeat_stats(t1);
  out.top5_stats = repeat_stats(t5);
  out.top1 = out.top1_stats->mean;
  out.top5 = out.top5_stats->mean;
  out.support = runs.front().support;
  auto average = [&](auto member) {
    std::map<std::string, Accuracy> m;
    for (const auto& r : runs) {
      for (const auto& [k, a] : r.*member) {
        auto& dst = m[k];
        dst.support = a.support;
        dst.top1 += a.top1 / double(runs.size());
        dst.top5 += a.top5 / double(runs.size());
      }
    }
    return m;
  };
  out.per_class = average(&EvalReport::per_class);
  out.per_provenience = average(&EvalReport::per_provenience);
  out.examples = runs.back().examples;
  return out;
}

}  // namespace

EvalReport run_repeats(const std::function<EvalReport(int, std::uint64_t)>& run, int n_repeats, std::uint64_t base_seed) {
  if (n_repeats < 1) throw Error("need at least one repeat");
  std::vector<EvalReport> runs;
  for (int i = 0; i < n_repeats; ++i) {
    try {
      runs.push_back(run(i, repeat_seed(base_seed, i)));
    } catch (const std::exception& e) {
      throw RepeatFailure("repeat " + std::to_string(i) + " failed: " + e.what(), aggregate(runs), i);
    }
  }
  return aggregate(runs);
}

// ---------------------------------------------------------------------------

const TransferCell* TransferRow::cell(std::string_view test) const {
  for (const auto& c : cells) {
    if (c.test == test) return &c;
  }
  return nullptr;
}

const TransferRow* TransferMatrix::row(const std::set<std::string>& training) const {
  for (const auto& r : rows) {
    if (r.training == training) return &r;
  }
  return nullptr;
}

TransferRow make_transfer_row(std::set<std::string> training, const std::map<std::string, Accuracy>& by_test) {
  TransferRow row;
  row.training = std::move(training);
  double in_sum = 0;
  int in_count = 0;
  for (const auto& [test, acc] : by_test) {
    TransferCell c;
    c.test = test;
    c.top1 = acc.top1;
    c.top5 = acc.top5;
    c.support = acc.support;
    c.in_distribution = row.training.contains(test);
    if (c.in_distribution) {
      in_sum += acc.top1;
      ++in_count;
    }
    row.cells.push_back(c);
  }
  if (in_count > 0) row.mean_in_distribution = in_sum / in_count;
  for (auto& c : row.cells) {
    if (!c.in_distribution && row.mean_in_distribution && *row.mean_in_distribution > 0) {
      c.ood_ratio = c.top1 / *row.mean_in_distribution;
    }
  }
  return row;
}

TransferMatrix transfer_matrix(const CorpusManifest& manifest, const std::vector<std::set<std::string>>& combinations,
                               const std::set<std::string>& held_out, Visualization visualization,
                               const TrainConfig& config, const TransferOptions& options, ImageCache& cache) {
  for (const auto& combo : combinations) {
    if (combo.empty()) throw Error("empty training combination");
    for (const auto& p : combo) {
      if (held_out.contains(p)) throw Error("training combination includes held-out provenience " + p);
    }
  }
  std::set<std::string> trainable;
  for (const auto& p : manifest.proveniences) {
    if (!held_out.contains(p)) trainable.insert(p);
  }
  if (trainable.empty()) throw Error("no provenience left for training");

  const ManifestView train_view = filter(manifest, trainable, visualization);
  const DatasetSplit split = build_split(train_view, options.split_seed, options.min_instances);
  const auto train_all = build_samples(manifest, split.train_ids, visualization, cache);

  std::map<std::string, std::vector<CropSample>> test_by_prov;
  for (auto& s : build_samples(manifest, split.test_ids, visualization, cache)) test_by_prov[s.meta.provenience].push_back(std::move(s));
  if (!held_out.empty()) {
    const ManifestView hv = filter(manifest, held_out, visualization);
    for (std::size_t i = 0; i < hv.size(); ++i) {
      if (!split.included_classes.contains(hv[i].sign_class)) continue;
      ManifestView one{&manifest, {hv.annotations[i]}};
      for (auto& s : build_samples(one, visualization, manifest.vocabulary, cache)) test_by_prov[s.meta.provenience].push_back(std::move(s));
    }
  }

  TransferMatrix m;
  m.held_out = held_out;
  for (const auto& [p, _] : test_by_prov) m.columns.push_back(p);
  for (const auto& combo : combinations) {
    const auto train_set = restrict_to(train_all, combo);
    auto result = train(train_set, {}, manifest.vocabulary, config);
    std::map<std::string, Accuracy> by_test;
    for (const auto& [p, samples] : test_by_prov) {
      const auto r = evaluate(result.model, samples, config.normalization);
      by_test[p] = {r.support, r.top1, r.top5};
    }
    m.rows.push_back(make_transfer_row(combo, by_test));
  }
  return m;
}

// ---------------------------------------------------------------------------

std::string FrequencyBin::label() const {
  std::ostringstream s;
  s << "[" << lower << ", ";
  if (upper) {
    s << *upper << ")";
  } else {
    s << "inf)";
  }
  return s.str();
}

FrequencyBinReport frequency_bin_report(const EvalReport& report, const FrequencyHistogram& histogram,
                                        const std::vector<int>& edges) {
  if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw Error("frequency bin edges must be strictly increasing");
  }
  FrequencyBinReport out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    FrequencyBin b;
    b.lower = edges[i];
    if (i + 1 < edges.size()) b.upper = edges[i + 1];
    out.bins.push_back(b);
  }
  for (const auto& [name, acc] : report.per_class) {
    const auto it = histogram.counts.find(name);
    if (it == histogram.counts.end()) throw Error("class '" + name + "' is missing from the histogram");
    const int count = it->second;
    if (count < edges.front()) {
      throw Error("class '" + name + "' has " + std::to_string(count) + " instances, below the lowest bin edge");
    }
    const auto pos = std::upper_bound(edges.begin(), edges.end(), count) - edges.begin() - 1;
    out.bins[std::size_t(pos)].classes.emplace_back(name, acc);
  }
  for (auto& b : out.bins) {
    if (b.classes.empty()) continue;
    double s1 = 0, s5 = 0;
    for (const auto& [_, a] : b.classes) {
      s1 += a.top1;
      s5 += a.top5;
    }
    b.mean_top1 = s1 / double(b.classes.size());
    b.mean_top5 = s5 / double(b.classes.size());
  }
  return out;
}

// ---------------------------------------------------------------------------

GridReport grid_report(const EvalReport& compared, const EvalReport& baseline, GridSize grid,
                       const std::map<std::string, Eigen::Vector3d>* sign_normals) {
  std::map<std::string, const ExampleResult*> base;
  for (const auto& e : baseline.examples) base[e.id] = &e;
  if (base.size() != compared.examples.size()) throw Error("grid report: evaluations cover different annotation ids");
  for (const auto& e : compared.examples) {
    if (!base.contains(e.id)) throw Error("grid report: annotation " + e.id + " missing from the baseline");
  }

  const int k = int(grid);
  GridReport r;
  r.grid = grid;
  r.cells.resize(std::size_t(k * k));
  std::vector<long> b1(r.cells.size()), c1(r.cells.size()), b5(r.cells.size()), c5(r.cells.size());
  std::vector<Eigen::Vector3d> nsum(r.cells.size(), Eigen::Vector3d::Zero());
  std::vector<int> ncount(r.cells.size(), 0);
  for (int row = 0; row < k; ++row) {
    for (int col = 0; col < k; ++col) r.cells[std::size_t(row * k + col)].cell = {grid, row, col};
  }
  for (const auto& e : compared.examples) {
    const auto cell = grid_cell(e.centroid, grid);
    const auto i = std::size_t(cell.flat());
    const ExampleResult& b = *base.at(e.id);
    ++r.cells[i].support;
    b1[i] += b.hit(1);
    b5[i] += b.hit(5);
    c1[i] += e.hit(1);
    c5[i] += e.hit(5);
    if (sign_normals) {
      if (auto it = sign_normals->find(e.id); it != sign_normals->end()) {
        nsum[i] += it->second;
        ++ncount[i];
      }
    }
  }
  long tb = 0, tc = 0;
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    auto& c = r.cells[i];
    r.support += c.support;
    tb += b1[i];
    tc += c1[i];
    if (c.support > 0) {
      c.baseline_top1 = double(b1[i]) / c.support;
      c.compared_top1 = double(c1[i]) / c.support;
      c.baseline_top5 = double(b5[i]) / c.support;
      c.compared_top5 = double(c5[i]) / c.support;
      c.delta_pp = 100.0 * (c.compared_top1 - c.baseline_top1);
    }
    if (ncount[i] > 0 && nsum[i].norm() > 1e-12) c.normal = normalize_normal(nsum[i]);
  }
  if (r.support > 0) {
    r.baseline_top1 = double(tb) / r.support;
    r.compared_top1 = double(tc) / r.support;
  }
  return r;
}

std::map<std::string, Eigen::Vector3d> sign_normals(const ManifestView& view, ImageCache& cache) {
  std::map<std::string, Eigen::Vector3d> out;
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto& a = view[i];
    const auto& s = view.manifest->surface_of(a);
    const auto it = s.image_paths.find(Visualization::NormalMap);
    if (it == s.image_paths.end()) continue;
    const auto image = cache.get(it->second);
    const auto pixels = polygon_pixels(a.polygon, image->width, image->height);
    if (pixels.empty()) continue;
    const Eigen::Vector3d sum = normal_sum(*image, pixels);
    if (sum.norm() > 1e-12) out[a.id] = sum.normalized();
  }
  return out;
}

}  // namespace wedge
