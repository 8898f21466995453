#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "wedge/service.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that collides with Eigen names
#include <httplib.h>

using namespace wedge;
using namespace wedge::service;
using wedge::testing::TempDir;
using nlohmann::json;

namespace {

class UniformStub final : public Classifier {
 public:
  explicit UniformStub(int n) : n_(n) {}
  int n_classes() const override { return n_; }
  Eigen::MatrixXf predict_logits(std::span<const ImageF> prepared) const override {
    return Eigen::MatrixXf::Zero(Eigen::Index(prepared.size()), n_);
  }

 private:
  int n_;
};

struct Env {
  TempDir dir{"service"};
  CorpusManifest manifest;
  std::shared_ptr<const Model> model;
  std::string bare_surface;  // lacks SketchB

  Env() {
    synthetic::write_fixture(dir.path(), testing::tiny_fixture(3, 6));
    std::ifstream in(dir / "manifest.json");
    json j = json::parse(in);
    in.close();
    j["surfaces"][1]["images"].erase("SketchB");
    std::ofstream(dir / "manifest.json") << j.dump();
    manifest = load_manifest(dir.path());
    bare_surface = manifest.surfaces[1].id();
    auto m = std::make_shared<Model>(nn::BackboneKind::Compact, manifest.vocabulary, 3);
    m->info().visualization = Visualization::SketchB;
    model = m;
  }
};

Env& env() {
  static Env e;
  return e;
}

Response get(const Service& s, const std::string& path, std::map<std::string, std::string> params = {}) {
  return s.handle({"GET", path, std::move(params), ""});
}

Response post(const Service& s, const std::string& path, const json& body) {
  return s.handle({"POST", path, {}, body.dump()});
}

}  // namespace

TEST_CASE("softmax in double") {
  Eigen::VectorXf l(3);
  l << 1000.0f, 1000.0f, -1000.0f;
  const auto p = softmax(l);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("catalogue routes") {
  auto& e = env();
  const Service s(e.manifest, std::nullopt);
  CHECK(get(s, "/health").json().at("model_loaded") == false);

  const auto tablets = get(s, "/tablets");
  CHECK(tablets.status == 200);
  const auto list = tablets.json().at("tablets");
  CHECK(list.size() > 0);
  const std::string tablet = list[0].at("id");

  const auto surfaces = get(s, "/tablets/" + tablet + "/surfaces");
  CHECK(surfaces.status == 200);
  CHECK(surfaces.json().at("surfaces")[0].at("visualizations").size() >= 3);
  CHECK(get(s, "/tablets/nope/surfaces").status == 404);

  const auto sid = e.manifest.surfaces[0].id();
  const auto img = get(s, "/surfaces/" + sid + "/image", {{"viz", "SketchB"}});
  CHECK(img.status == 200);
  CHECK(img.content_type == "image/png");
  CHECK(img.body.substr(1, 3) == "PNG");
  CHECK(get(s, "/surfaces/" + sid + "/image", {{"viz", "ColorQ"}}).status == 400);
  const auto missing = get(s, "/surfaces/" + e.bare_surface + "/image", {{"viz", "SketchB"}});
  CHECK(missing.status == 400);
  CHECK(missing.json().at("available").size() == 3);
  CHECK(get(s, "/surfaces/none:front/image", {{"viz", "SketchB"}}).status == 404);

  CHECK(get(s, "/model").status == 503);
  CHECK(post(s, "/classify", {{"surface_id", sid}}).status == 503);
  CHECK(get(s, "/nowhere").status == 404);
  CHECK(s.handle({"DELETE", "/tablets", {}, ""}).status == 405);
  CHECK(s.handle({"OPTIONS", "/classify", {}, ""}).status == 204);
}

TEST_CASE("classification") {
  auto& e = env();
  const Service s(e.manifest, served_model(e.model));
  CHECK(get(s, "/health").json().at("model_loaded") == true);
  const auto info = get(s, "/model").json();
  CHECK(info.at("n_classes") == 3);
  CHECK(info.at("fingerprint") == e.manifest.vocabulary.fingerprint());
  CHECK(info.at("visualization") == "SketchB");

  const auto& a = e.manifest.annotations[0];
  const auto& surf = e.manifest.surface_of(a);
  json poly = json::array();
  for (const auto& p : a.polygon) poly.push_back({p.x(), p.y()});
  const auto r = post(s, "/classify", {{"surface_id", surf.id()}, {"polygon", poly}});
  REQUIRE(r.status == 200);
  const auto j = r.json();
  CHECK(j.at("predictions").size() == 3);
  CHECK(j.at("logits").size() == 3);
  CHECK(j.at("model_fingerprint") == e.model->fingerprint());
  const auto box = squarify(a.polygon);
  CHECK(j.at("crop").at("x0") == box.x0);
  CHECK(j.at("crop").at("side") == box.side);

  // same crop through the library
  ImageCache cache;
  const auto img = cache.get(surf.image_paths.at(Visualization::SketchB));
  const ImageF prepared = prepare_eval(extract_crop(*img, box));
  const Eigen::MatrixXf direct = e.model->predict_logits(std::span<const ImageF>(&prepared, 1));
  for (int c = 0; c < 3; ++c) CHECK(j.at("logits")[std::size_t(c)].get<float>() == direct(0, c));

  double prev = 2.0;
  for (const auto& p : j.at("predictions")) {
    CHECK(p.at("confidence").get<double>() <= prev);
    prev = p.at("confidence");
  }

  const auto ext = extreme_rect(a.polygon);
  const auto rect = post(s, "/classify",
                         {{"surface_id", surf.id()},
                          {"rect", {{"x0", ext.x1}, {"y0", ext.y1}, {"x1", ext.x0}, {"y1", ext.y0}}}});
  CHECK(rect.status == 200);
  CHECK(rect.json().at("logits") == j.at("logits"));
}

TEST_CASE("classification errors") {
  auto& e = env();
  const Service s(e.manifest, served_model(e.model));
  const auto sid = e.manifest.surfaces[0].id();
  CHECK(s.handle({"POST", "/classify", {}, "not json"}).status == 400);
  CHECK(post(s, "/classify", {{"rect", {{"x0", 0}}}}).status == 400);
  CHECK(post(s, "/classify", {{"surface_id", "ghost:front"}, {"rect", {{"x0", 0}, {"y0", 0}, {"x1", 5}, {"y1", 5}}}})
            .status == 404);
  CHECK(post(s, "/classify", {{"surface_id", sid}, {"rect", {{"x0", 3}, {"y0", 0}, {"x1", 3}, {"y1", 9}}}}).status ==
        400);
  CHECK(post(s, "/classify", {{"surface_id", sid}}).status == 400);
  CHECK(post(s, "/classify", {{"surface_id", sid}, {"polygon", {{1, 1}, {2, 2}}}}).status == 400);
  CHECK(post(s, "/classify",
             {{"surface_id", sid}, {"rect", {{"x0", -50}, {"y0", -50}, {"x1", -10}, {"y1", -10}}}})
            .status == 400);
  CHECK(post(s, "/classify", {{"surface_id", sid}, {"viz", "ColorQ"}, {"rect", {{"x0", 0}, {"y0", 0}, {"x1", 9}, {"y1", 9}}}})
            .status == 400);
  const auto missing =
      post(s, "/classify", {{"surface_id", e.bare_surface}, {"rect", {{"x0", 0}, {"y0", 0}, {"x1", 9}, {"y1", 9}}}});
  CHECK(missing.status == 400);
  CHECK(missing.json().contains("available"));
  CHECK(get(s, "/classify").status == 405);
}

TEST_CASE("display mask hides predictions below half a percent") {
  auto& e = env();
  ServedModel stub;
  stub.classifier = std::make_shared<UniformStub>(206);
  for (int i = 0; i < 206; ++i) stub.class_names.push_back("S" + std::to_string(i));
  stub.fingerprint = Vocabulary(stub.class_names).fingerprint();
  stub.visualization = Visualization::SketchB;
  const Service s(e.manifest, stub);
  const auto r = post(s, "/classify",
                      {{"surface_id", e.manifest.surfaces[0].id()}, {"rect", {{"x0", 10}, {"y0", 10}, {"x1", 40}, {"y1", 30}}}});
  REQUIRE(r.status == 200);
  const auto j = r.json();
  CHECK(j.at("predictions").size() == kTopPredictions);
  for (const auto& m : j.at("display_mask")) CHECK(m == false);
  // ties keep class order
  CHECK(j.at("predictions")[0].at("index") == 0);
  CHECK(j.at("predictions")[4].at("index") == 4);
}

TEST_CASE("HTTP server") {
  auto& e = env();
  const Service s(e.manifest, served_model(e.model));
  HttpServer server(s, 2);
  const int port = server.start("127.0.0.1", 0);
  CHECK(port > 0);
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

  const auto sid = e.manifest.surfaces[0].id();
  auto img = client.Get("/surfaces/" + sid + "/image?viz=NormalMap");
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");

  const json body{{"surface_id", sid}, {"rect", {{"x0", 10}, {"y0", 10}, {"x1", 40}, {"y1", 30}}}};
  auto res = client.Post("/classify", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).at("logits") == s.classify(body.dump()).json().at("logits"));

  auto bad = client.Delete("/tablets");
  REQUIRE(bad);
  CHECK(bad->status == 405);
  server.stop();
}
