#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "wedge/corpus.hpp"
#include "wedge/model.hpp"
#include "wedge/samples.hpp"

namespace wedge::service {

/// What the service needs from a classifier: logits plus the names and
/// metadata reported to clients. Built from a checkpoint or from a stub.
struct ServedModel {
  std::shared_ptr<const Classifier> classifier;
  std::vector<std::string> class_names;
  std::string fingerprint;
  Normalization normalization;
  std::optional<Visualization> visualization;
  nlohmann::json metadata = nlohmann::json::object();
};

ServedModel served_model(std::shared_ptr<const Model> model);

inline constexpr double kDisplayThreshold = 0.005;
inline constexpr int kTopPredictions = 5;

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> params;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

/// Routes requests against one corpus and at most one model. Handlers are
/// const and only read shared state, so concurrent requests are safe.
class Service {
 public:
  Service(CorpusManifest manifest, std::optional<ServedModel> model);

  Response handle(const Request& request) const;

  Response health() const;
  Response tablets() const;
  Response surfaces(const std::string& tablet_id) const;
  Response image(const std::string& surface_id, const std::string& viz) const;
  Response classify(const std::string& body) const;
  Response model_info() const;

  const CorpusManifest& manifest() const { return manifest_; }

 private:
  CorpusManifest manifest_;
  std::optional<ServedModel> model_;
  mutable ImageCache cache_;
};

/// Softmax of a logit row in double precision.
std::vector<double> softmax(const Eigen::Ref<const Eigen::VectorXf>& logits);

/// httplib listener around a Service with a bounded worker pool.
class HttpServer {
 public:
  explicit HttpServer(const Service& service, int workers = 4);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread;
  /// returns the bound port. Throws Error when binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wedge::service
