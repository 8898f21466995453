#include "wedge/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "wedge/augment.hpp"
#include "wedge/error.hpp"
#include "wedge/rng.hpp"

namespace wedge {

Eigen::Index EmbeddingSet::row_of(std::string_view id) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].id == id) return Eigen::Index(i);
  }
  throw Error("annotation '" + std::string(id) + "' is not in the embedding set");
}

void EmbeddingSet::check() const {
  if (std::size_t(features.rows()) != rows.size()) throw ShapeError("embedding rows and metadata differ in length");
  if (!features.allFinite()) throw Error("embedding contains non-finite values");
}

EmbeddingSet embed_dataset(const Model& model, std::span<const CropSample> samples, std::string source) {
  if (samples.empty()) throw Error("cannot embed an empty view");
  EmbeddingSet out;
  out.source = std::move(source);
  out.features.resize(Eigen::Index(samples.size()), nn::kFeatureDim);
  const auto& norm = model.info().normalization;
  constexpr std::size_t chunk = 32;
  std::vector<ImageF> batch;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(prepare_eval(samples[i].pixels, norm));
    out.features.middleRows(Eigen::Index(start), Eigen::Index(end - start)) = model.extract_features(batch);
  }
  for (const auto& s : samples) {
    out.rows.push_back({s.meta.annotation_id, s.meta.sign_class, s.meta.provenience, s.meta.visualization});
  }
  out.check();
  return out;
}

EmbeddingSet embed_dataset(const Model& model, const ManifestView& view, Visualization visualization,
                           ImageCache& cache, std::string source) {
  if (view.empty()) throw Error("cannot embed an empty view");
  const auto samples = build_samples(view, visualization, model.info().vocabulary, cache);
  return embed_dataset(model, samples, std::move(source));
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Row-conditional affinities with each row's entropy matched to log(perplexity).
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
      double sum = 0, weighted = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row(j);
        weighted += row(j) * d2(i, j);
      }
      if (sum <= 0) sum = 1e-300;
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = (beta + lo) / 2;
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

}  // namespace

Projection2D project_2d(const Eigen::MatrixXf& points, const TsneOptions& options) {
  const Eigen::Index n = points.rows();
  if (!(options.perplexity > 0)) throw Error("perplexity must be positive");
  if (double(n) <= 3.0 * options.perplexity) {
    throw Error("t-SNE needs more than " + std::to_string(int(3 * options.perplexity)) + " points, got " +
                std::to_string(n));
  }
  const Eigen::MatrixXd x = points.cast<double>();
  Eigen::MatrixXd p = conditional_affinities(squared_distances(x), options.perplexity);
  p = (p + p.transpose().eval()) / (2.0 * double(n));
  p = p.cwiseMax(1e-12);

  Rng rng(stream_seed(options.seed, 0x75e));
  Eigen::MatrixX2d y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = 1e-4 * normal01(rng);
    y(i, 1) = 1e-4 * normal01(rng);
  }
  Eigen::MatrixX2d velocity = Eigen::MatrixX2d::Zero(n, 2);
  Eigen::MatrixX2d gains = Eigen::MatrixX2d::Ones(n, 2);
  Eigen::MatrixXd num(n, n);
  Eigen::MatrixX2d grad(n, 2);

  for (int it = 0; it < options.iterations; ++it) {
    const double exaggeration = it < options.exaggeration_iterations ? options.exaggeration : 1.0;
    const double momentum = it < options.exaggeration_iterations ? 0.5 : 0.8;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    }
    const double z = num.sum();
    // dC/dy_i = 4 sum_j (p_ij - q_ij) num_ij (y_i - y_j)
    const Eigen::MatrixXd w = (exaggeration * p - num / z).cwiseProduct(num);
    grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same = (grad(i, c) > 0) == (velocity(i, c) > 0);
        gains(i, c) = std::max(same ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
      }
    }
    velocity = momentum * velocity - options.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }

  Projection2D out;
  out.coords = y;
  out.perplexity = options.perplexity;
  out.seed = options.seed;
  return out;
}

Projection2D project_2d(const EmbeddingSet& embeddings, const TsneOptions& options) {
  embeddings.check();
  return project_2d(embeddings.features, options);
}

double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> labels) {
  const Eigen::Index n = points.rows();
  if (std::size_t(n) != labels.size()) throw ShapeError("points and labels differ in length");
  std::map<int, int> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw Error("silhouette needs at least two clusters");
  const Eigen::MatrixXd d = squared_distances(points).cwiseSqrt();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, double> sum;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sum[labels[std::size_t(j)]] += d(i, j);
    }
    const int own = labels[std::size_t(i)];
    if (sizes[own] == 1) continue;  // singleton contributes 0
    const double a = sum[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sum) {
      if (l != own) b = std::min(b, s / sizes[l]);
    }
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / double(n);
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingSet& embeddings, std::string_view query, int k) {
  const Eigen::Index n = embeddings.size();
  if (k < 1 || k >= n) throw Error("k must be in [1, " + std::to_string(n - 1) + "], got " + std::to_string(k));
  const Eigen::Index q = embeddings.row_of(query);
  const Eigen::VectorXd qv = embeddings.features.row(q).cast<double>().transpose();
  const double qn = qv.norm();
  std::vector<Neighbor> all;
  all.reserve(std::size_t(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == q) continue;
    const Eigen::VectorXd v = embeddings.features.row(i).cast<double>().transpose();
    const double denom = qn * v.norm();
    const double sim = denom > 0 ? std::clamp(qv.dot(v) / denom, -1.0, 1.0) : 0.0;
    all.push_back({embeddings.rows[std::size_t(i)].id, sim});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  all.resize(std::size_t(k));
  return all;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(9);
  return out;
}

}  // namespace

void write_embedding_csv(const std::filesystem::path& path, const EmbeddingSet& e, const std::string& comment) {
  e.check();
  auto out = open_out(path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "id,class,provenience,viz";
  for (Eigen::Index c = 0; c < e.features.cols(); ++c) out << ",f" << c;
  out << "\n";
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const auto& r = e.rows[std::size_t(i)];
    out << r.id << ',' << r.sign_class << ',' << r.provenience << ',' << to_string(r.visualization);
    for (Eigen::Index c = 0; c < e.features.cols(); ++c) out << ',' << e.features(i, c);
    out << "\n";
  }
}

void write_projection_csv(const std::filesystem::path& path, const EmbeddingSet& e, const Projection2D& p,
                          const std::string& comment) {
  if (p.coords.rows() != e.size()) throw ShapeError("projection and embedding differ in length");
  auto out = open_out(path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out.precision(12);
  out << "id,class,provenience,x,y\n";
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const auto& r = e.rows[std::size_t(i)];
    out << r.id << ',' << r.sign_class << ',' << r.provenience << ',' << p.coords(i, 0) << ',' << p.coords(i, 1) << "\n";
  }
}

EmbeddingSet read_embedding_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  do {
    if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
  } while (!line.empty() && line[0] == '#');
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "id" || header[3] != "viz") throw Error(path.string() + ": not an embedding file");
  const std::size_t dim = header.size() - 4;
  EmbeddingSet e;
  std::vector<float> values;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw Error(path.string() + ": row " + std::to_string(e.rows.size() + 1) + " has the wrong width");
    const auto viz = parse_visualization(f[3]);
    if (!viz) throw Error(path.string() + ": unknown visualization '" + f[3] + "'");
    e.rows.push_back({f[0], f[1], f[2], *viz});
    for (std::size_t c = 4; c < f.size(); ++c) values.push_back(std::stof(f[c]));
  }
  e.features = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), Eigen::Index(e.rows.size()), Eigen::Index(dim));
  e.source = path.filename().string();
  return e;
}

}  // namespace wedge
