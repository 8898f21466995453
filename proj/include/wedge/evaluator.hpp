#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wedge/corpus.hpp"
#include "wedge/error.hpp"
#include "wedge/geometry.hpp"
#include "wedge/model.hpp"
#include "wedge/samples.hpp"

namespace wedge {

/// Zero-based position of `true_class` when classes are ordered by
/// descending logit, ties going to the lower class index.
int true_class_rank(const Eigen::Ref<const Eigen::VectorXf>& logits, int true_class);

/// True iff `true_class` is among the k highest logits (ties by lower index).
inline bool top_k_hits(const Eigen::Ref<const Eigen::VectorXf>& logits, int true_class, int k) {
  return true_class_rank(logits, true_class) < k;
}

struct ExampleResult {
  std::string id;
  std::string sign_class;
  int label = -1;
  std::string provenience;
  std::string surface_id;
  Point centroid = Point::Zero();
  int rank = 0;

  bool hit(int k) const { return rank < k; }
};

struct Accuracy {
  int support = 0;
  double top1 = 0;
  double top5 = 0;
};

struct RepeatStats {
  double mean = 0;
  /// Sample (n-1) standard deviation; absent for a single run.
  std::optional<double> std;
};

RepeatStats repeat_stats(std::span<const double> values);

struct EvalReport {
  double top1 = 0;
  double top5 = 0;
  int support = 0;
  std::map<std::string, Accuracy> per_class;
  std::map<std::string, Accuracy> per_provenience;
  std::vector<ExampleResult> examples;
  /// (top1, top5) of each constituent run when this report aggregates repeats.
  std::vector<std::pair<double, double>> repeats;
  std::optional<RepeatStats> top1_stats;
  std::optional<RepeatStats> top5_stats;
};

/// Streams scored examples into an EvalReport; sums are kept as integer
/// hit counts so the report does not depend on arrival order.
class EvalAccumulator {
 public:
  void add(const Eigen::Ref<const Eigen::VectorXf>& logits, ExampleResult example);
  void add(ExampleResult example);  // rank already set
  EvalReport finish() const;
  std::size_t size() const { return examples_.size(); }

 private:
  std::vector<ExampleResult> examples_;
};

/// Builds an Accuracy from a list of examples.
Accuracy accuracy_of(std::span<const ExampleResult> examples);

ExampleResult example_from(const SampleMeta& meta, int label);

/// Eval-mode scoring of every sample. Throws Error on an empty set.
EvalReport evaluate(const Classifier& model, std::span<const CropSample> samples, const Normalization& norm = {},
                    int batch_size = 32);

/// Scores rows of a batch x classes logit matrix.
EvalReport evaluate_logits(const Eigen::MatrixXf& logits, std::span<const SampleMeta> meta, std::span<const int> labels);

class RepeatFailure : public Error {
 public:
  RepeatFailure(const std::string& what, EvalReport partial, int failed_repeat)
      : Error(what), partial_(std::move(partial)), failed_(failed_repeat) {}
  const EvalReport& partial() const { return partial_; }
  int failed_repeat() const { return failed_; }

 private:
  EvalReport partial_;
  int failed_;
};

/// Runs `run(repeat, seed)` with distinct seeds and aggregates: top1/top5
/// and per-class/per-provenience figures become means over runs, and the
/// per-run pairs plus mean/std are attached. A failing run aborts with a
/// RepeatFailure carrying the runs completed so far.
EvalReport run_repeats(const std::function<EvalReport(int repeat, std::uint64_t seed)>& run, int n_repeats,
                       std::uint64_t base_seed);

std::uint64_t repeat_seed(std::uint64_t base_seed, int repeat);

// ---------------------------------------------------------------------------
// Provenience transfer

struct TransferCell {
  std::string test;
  double top1 = 0;
  double top5 = 0;
  int support = 0;
  bool in_distribution = false;
  /// top1 / mean in-distribution top1 of the row; out-of-distribution cells only.
  std::optional<double> ood_ratio;
};

struct TransferRow {
  std::set<std::string> training;
  std::vector<TransferCell> cells;
  std::optional<double> mean_in_distribution;

  const TransferCell* cell(std::string_view test) const;
};

struct TransferMatrix {
  std::vector<std::string> columns;
  std::set<std::string> held_out;
  std::vector<TransferRow> rows;

  const TransferRow* row(const std::set<std::string>& training) const;
};

/// Flags cells and fills ratios from per-column accuracies.
TransferRow make_transfer_row(std::set<std::string> training, const std::map<std::string, Accuracy>& by_test);

struct TrainConfig;

struct TransferOptions {
  std::uint64_t split_seed = 0;
  int min_instances = kDefaultMinInstances;
};

/// Trains one model per provenience combination and evaluates it on every
/// provenience. Non-held-out proveniences are tested on one shared split;
/// held-out ones on all their annotations of included classes. Throws
/// Error when a combination contains a held-out provenience.
TransferMatrix transfer_matrix(const CorpusManifest& manifest, const std::vector<std::set<std::string>>& combinations,
                               const std::set<std::string>& held_out, Visualization visualization,
                               const TrainConfig& config, const TransferOptions& options, ImageCache& cache);

// ---------------------------------------------------------------------------
// Frequency bins

inline const std::vector<int> kDefaultFrequencyEdges{20, 40, 100, 250};

struct FrequencyBin {
  int lower = 0;
  std::optional<int> upper;  // exclusive; absent for the last bin
  std::vector<std::pair<std::string, Accuracy>> classes;
  /// Unweighted means over classes; absent for an empty bin.
  std::optional<double> mean_top1;
  std::optional<double> mean_top5;

  std::string label() const;
};

struct FrequencyBinReport {
  std::vector<FrequencyBin> bins;
};

/// Bins evaluated classes by their corpus instance count. Throws Error for
/// a class missing from the histogram or below the lowest edge.
FrequencyBinReport frequency_bin_report(const EvalReport& report, const FrequencyHistogram& histogram,
                                        const std::vector<int>& edges = kDefaultFrequencyEdges);

// ---------------------------------------------------------------------------
// Tablet grid

struct GridCellReport {
  GridCell cell;
  int support = 0;
  double baseline_top1 = 0;
  double compared_top1 = 0;
  double baseline_top5 = 0;
  double compared_top5 = 0;
  /// (compared - baseline) top-1 in percentage points.
  double delta_pp = 0;
  std::optional<AverageNormal> normal;
};

struct GridReport {
  GridSize grid = GridSize::ThreeByThree;
  int support = 0;
  double baseline_top1 = 0;
  double compared_top1 = 0;
  std::vector<GridCellReport> cells;  // row-major
};

/// Per-cell accuracies of `baseline` and `compared` over the same
/// annotation ids (Error otherwise). `sign_normals` maps annotation id to a
/// unit normal; each cell gets the renormalized mean of its signs' normals.
GridReport grid_report(const EvalReport& compared, const EvalReport& baseline, GridSize grid,
                       const std::map<std::string, Eigen::Vector3d>* sign_normals = nullptr);

/// Unit average normal of every annotation in `view`, decoded from the
/// surfaces' normal maps; surfaces without one are skipped.
std::map<std::string, Eigen::Vector3d> sign_normals(const ManifestView& view, ImageCache& cache);

}  // namespace wedge
