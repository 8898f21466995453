#include "wedge/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "wedge/augment.hpp"
#include "wedge/error.hpp"
#include "wedge/geometry.hpp"

namespace wedge::service {

using nlohmann::json;

ServedModel served_model(std::shared_ptr<const Model> model) {
  ServedModel s;
  const auto& info = model->info();
  s.class_names = info.vocabulary.names();
  s.fingerprint = model->fingerprint();
  s.normalization = info.normalization;
  s.visualization = info.visualization;
  s.metadata = {{"backbone", std::string(nn::to_string(info.backbone))},
                {"proveniences", info.proveniences},
                {"init", info.init}};
  s.classifier = std::move(model);
  return s;
}

std::vector<double> softmax(const Eigen::Ref<const Eigen::VectorXf>& logits) {
  std::vector<double> p(std::size_t(logits.size()));
  if (p.empty()) return p;
  const double m = logits.cast<double>().maxCoeff();
  double z = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) z += p[std::size_t(i)] = std::exp(double(logits(i)) - m);
  for (auto& v : p) v /= z;
  return p;
}

namespace {

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return json_response(status, extra);
}

std::vector<std::string> tags(const SurfaceRecord& s) {
  std::vector<std::string> out;
  for (const auto v : s.available()) out.emplace_back(to_string(v));
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  return "application/octet-stream";
}

std::optional<double> number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

Service::Service(CorpusManifest manifest, std::optional<ServedModel> model)
    : manifest_(std::move(manifest)), model_(std::move(model)) {}

Response Service::handle(const Request& r) const {
  const auto parts = split_path(r.path);
  const bool get = r.method == "GET";
  try {
    if (r.method == "OPTIONS") return {204, "text/plain", ""};
    if (parts.size() == 1 && parts[0] == "health") return get ? health() : error(405, "method not allowed");
    if (parts.size() == 1 && parts[0] == "tablets") return get ? tablets() : error(405, "method not allowed");
    if (parts.size() == 1 && parts[0] == "model") return get ? model_info() : error(405, "method not allowed");
    if (parts.size() == 1 && parts[0] == "classify") {
      return r.method == "POST" ? classify(r.body) : error(405, "method not allowed");
    }
    if (parts.size() == 3 && parts[0] == "tablets" && parts[2] == "surfaces") {
      return get ? surfaces(parts[1]) : error(405, "method not allowed");
    }
    if (parts.size() == 3 && parts[0] == "surfaces" && parts[2] == "image") {
      const auto it = r.params.find("viz");
      return get ? image(parts[1], it == r.params.end() ? "" : it->second) : error(405, "method not allowed");
    }
    return error(404, "no route for " + r.path);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response Service::health() const { return json_response(200, {{"status", "ok"}, {"model_loaded", model_.has_value()}}); }

Response Service::tablets() const {
  std::map<std::string, json> by_tablet;
  for (const auto& s : manifest_.surfaces) {
    auto& t = by_tablet[s.tablet_id];
    if (t.is_null()) t = {{"id", s.tablet_id}, {"provenience", s.provenience}, {"surfaces", json::array()}};
    t["surfaces"].push_back(s.id());
  }
  json out = json::array();
  for (auto& [_, t] : by_tablet) out.push_back(std::move(t));
  return json_response(200, {{"tablets", out}});
}

Response Service::surfaces(const std::string& tablet_id) const {
  json out = json::array();
  for (const auto& s : manifest_.surfaces) {
    if (s.tablet_id != tablet_id) continue;
    out.push_back({{"id", s.id()},
                   {"side", std::string(to_string(s.side))},
                   {"provenience", s.provenience},
                   {"width_px", s.width_px},
                   {"height_px", s.height_px},
                   {"visualizations", tags(s)}});
  }
  if (out.empty()) return error(404, "unknown tablet '" + tablet_id + "'");
  return json_response(200, {{"tablet_id", tablet_id}, {"surfaces", out}});
}

Response Service::image(const std::string& surface_id, const std::string& viz_tag) const {
  const auto idx = manifest_.find_surface(surface_id);
  if (!idx) return error(404, "unknown surface '" + surface_id + "'");
  const auto& s = manifest_.surfaces[*idx];
  const auto viz = parse_visualization(viz_tag);
  if (!viz) return error(400, "unknown visualization tag '" + viz_tag + "'", {{"available", tags(s)}});
  if (!s.has(*viz)) return error(400, viz_tag + " is not available for " + surface_id, {{"available", tags(s)}});
  const auto& path = s.image_paths.at(*viz);
  return {200, content_type_for(path), read_file(path)};
}

Response Service::model_info() const {
  if (!model_) return error(503, "no model loaded");
  json j = model_->metadata;
  j["n_classes"] = model_->class_names.size();
  j["classes"] = model_->class_names;
  j["fingerprint"] = model_->fingerprint;
  j["visualization"] = model_->visualization ? json(std::string(to_string(*model_->visualization))) : json(nullptr);
  return json_response(200, j);
}

Response Service::classify(const std::string& body) const {
  if (!model_) return error(503, "no model loaded");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return error(400, "request body is not JSON");
  }
  if (!req.is_object() || !req.contains("surface_id") || !req.at("surface_id").is_string()) {
    return error(400, "surface_id is required");
  }
  const auto surface_id = req.at("surface_id").get<std::string>();
  const auto idx = manifest_.find_surface(surface_id);
  if (!idx) return error(404, "unknown surface '" + surface_id + "'");
  const auto& surface = manifest_.surfaces[*idx];

  std::optional<Visualization> viz = model_->visualization;
  if (req.contains("viz")) {
    const auto tag = req.at("viz").is_string() ? req.at("viz").get<std::string>() : std::string();
    viz = parse_visualization(tag);
    if (!viz) return error(400, "unknown visualization tag '" + tag + "'", {{"available", tags(surface)}});
  }
  if (!viz) return error(400, "viz is required");
  if (!surface.has(*viz)) {
    return error(400, std::string(to_string(*viz)) + " is not available for " + surface_id, {{"available", tags(surface)}});
  }

  Polygon region;
  if (req.contains("rect")) {
    const auto& r = req.at("rect");
    const auto x0 = number(r, "x0"), y0 = number(r, "y0"), x1 = number(r, "x1"), y1 = number(r, "y1");
    if (!x0 || !y0 || !x1 || !y1) return error(400, "rect needs numeric x0, y0, x1, y1");
    const double lx = std::min(*x0, *x1), hx = std::max(*x0, *x1), ly = std::min(*y0, *y1), hy = std::max(*y0, *y1);
    if (!(hx > lx) || !(hy > ly)) return error(400, "degenerate region: rect has zero area");
    region = {{lx, ly}, {hx, ly}, {hx, hy}, {lx, hy}};
  } else if (req.contains("polygon") && req.at("polygon").is_array()) {
    for (const auto& v : req.at("polygon")) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        return error(400, "polygon vertices must be [x, y] pairs");
      }
      region.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
  } else {
    return error(400, "rect or polygon is required");
  }

  SquareBox box;
  try {
    box = squarify(region);
  } catch (const GeometryError& e) {
    return error(400, std::string("degenerate region: ") + e.what());
  }
  const auto ext = extreme_rect(region);
  if (ext.x1 <= 0 || ext.y1 <= 0 || ext.x0 >= surface.width_px || ext.y0 >= surface.height_px) {
    return error(400, "region does not intersect the image");
  }

  const auto img = cache_.get(surface.image_paths.at(*viz));
  ImageF prepared;
  try {
    prepared = prepare_eval(extract_crop(*img, box), model_->normalization);
  } catch (const GeometryError& e) {
    return error(400, e.what());
  }
  const Eigen::MatrixXf logits = model_->classifier->predict_logits(std::span<const ImageF>(&prepared, 1));
  const Eigen::VectorXf row = logits.row(0).transpose();
  const auto probs = softmax(row);

  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[std::size_t(a)] > probs[std::size_t(b)]; });
  const std::size_t n = std::min<std::size_t>(kTopPredictions, order.size());
  json preds = json::array(), mask = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const int c = order[i];
    const double p = probs[std::size_t(c)];
    preds.push_back({{"class", model_->class_names.at(std::size_t(c))}, {"index", c}, {"confidence", p}});
    mask.push_back(p >= kDisplayThreshold);
  }
  json logit_list = json::array();
  for (Eigen::Index i = 0; i < row.size(); ++i) logit_list.push_back(row(i));
  return json_response(200, {{"predictions", preds},
                             {"display_mask", mask},
                             {"display_threshold", kDisplayThreshold},
                             {"logits", logit_list},
                             {"model_fingerprint", model_->fingerprint},
                             {"crop",
                              {{"x0", box.x0},
                               {"y0", box.y0},
                               {"side", box.side},
                               {"viz", std::string(to_string(*viz))},
                               {"surface_id", surface_id}}}});
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  const Service& service;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(const Service& service, int workers) : impl_(new Impl{service, {}, {}}) {
  auto& svr = impl_->server;
  svr.new_task_queue = [workers] { return new httplib::ThreadPool(std::size_t(std::max(1, workers))); };
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Request r{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) r.params.emplace(k, v);
    const Response out = impl_->service.handle(r);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_content(out.body, out.content_type);
  };
  svr.Get(".*", handler);
  svr.Post(".*", handler);
  svr.Options(".*", handler);
  svr.Put(".*", handler);
  svr.Delete(".*", handler);
  svr.Patch(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = svr.bind_to_any_port(host);
  } else if (!svr.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  svr.wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace wedge::service
