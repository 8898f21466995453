#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wedge/corpus.hpp"
#include "wedge/model.hpp"
#include "wedge/samples.hpp"

namespace wedge {

struct EmbeddingRow {
  std::string id;
  std::string sign_class;
  std::string provenience;
  Visualization visualization = Visualization::Color00;
};

/// Penultimate-layer features, one row per annotation.
struct EmbeddingSet {
  Eigen::MatrixXf features;  // N x 2048
  std::vector<EmbeddingRow> rows;
  std::string source;  // free-form description of the view, e.g. "test"

  Eigen::Index size() const { return features.rows(); }
  /// Row index of an annotation id; throws Error when absent.
  Eigen::Index row_of(std::string_view id) const;
  void check() const;
};

/// Eval-mode features of every crop. Throws Error on an empty input.
EmbeddingSet embed_dataset(const Model& model, std::span<const CropSample> samples, std::string source = {});
EmbeddingSet embed_dataset(const Model& model, const ManifestView& view, Visualization visualization,
                           ImageCache& cache, std::string source = {});

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  int exaggeration_iterations = 250;
  double exaggeration = 12.0;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
};

struct Projection2D {
  Eigen::MatrixX2d coords;  // N x 2, rows aligned with the embedding set
  std::string method = "tsne-exact";
  double perplexity = 30.0;
  std::uint64_t seed = 0;
};

/// Exact t-SNE on Euclidean distances. Throws Error unless N > 3 * perplexity.
Projection2D project_2d(const EmbeddingSet& embeddings, const TsneOptions& options = {});
Projection2D project_2d(const Eigen::MatrixXf& points, const TsneOptions& options = {});

/// Mean silhouette coefficient of `points` (rows) under `labels`.
double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> labels);

struct Neighbor {
  std::string id;
  double similarity = 0;
};

/// The k rows most cosine-similar to `query`, excluding it; ties go to the
/// ascending id. Throws Error when k >= N or the id is unknown.
std::vector<Neighbor> nearest_neighbors(const EmbeddingSet& embeddings, std::string_view query, int k);

/// id,class,provenience,viz,f0..f2047. A non-empty `comment` is written
/// first as a '#' line; readers skip such lines.
void write_embedding_csv(const std::filesystem::path& path, const EmbeddingSet& embeddings,
                         const std::string& comment = {});
/// id,class,provenience,x,y
void write_projection_csv(const std::filesystem::path& path, const EmbeddingSet& embeddings,
                          const Projection2D& projection, const std::string& comment = {});
EmbeddingSet read_embedding_csv(const std::filesystem::path& path);

}  // namespace wedge
