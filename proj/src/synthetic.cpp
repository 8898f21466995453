#include "wedge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "wedge/error.hpp"
#include "wedge/rng.hpp"

namespace wedge::synthetic {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

WedgeSpec hook(double x, double y, double angle = 0) {
  // Winkelhaken: a head with no tail
  return {x, y, angle, 0.6, 0.9, 0.6};
}

}  // namespace

const std::vector<GlyphSpec>& glyph_library() {
  static const std::vector<GlyphSpec> lib = {
      {"DISZ", {{-0.8, 0, 0, 1.6}}},
      {"MIN", {{-0.8, -0.4, 0, 1.6}, {-0.8, 0.4, 0, 1.6}}},
      {"ESZ", {{-0.7, -0.65, 0, 1.4}, {-0.7, 0, 0, 1.4}, {-0.7, 0.65, 0, 1.4}}},
      {"U", {hook(-0.3, 0)}},
      {"TAB", {{-0.95, 0, 0, 0.85}, {0.1, 0, 0, 0.85}}},
      {"MASZ", {{-0.7, -0.7, 45, 2.0}, {-0.7, 0.7, -45, 2.0}}},
      {"NA", {{-0.8, -0.6, 0, 1.6}, {0, -0.35, 90, 1.3}}},
      {"SZU", {{-0.8, -0.6, 0, 1.6}, {-0.45, -0.3, 90, 1.2}, {0.45, -0.3, 90, 1.2}}},
      {"UD", {hook(-0.9, 0), {-0.1, 0, 0, 1.0}}},
      {"MA", {{-0.8, -0.35, 0, 1.6}, {-0.8, 0.35, 0, 1.6}, {-0.35, -0.8, 90, 1.6}, {0.35, -0.8, 90, 1.6}}},
  };
  return lib;
}

FixtureConfig glyph_fixture() {
  FixtureConfig c;
  c.seed = 11;
  c.proveniences = {
      {"site-a", {0.25, 1.0, 1.15, 1.0, 0, 1.0}, 14, {}},
      {"site-b", {-0.1, 1.1, 1.0, 0.9, 5, 1.0}, 13, {}},
      {"site-c", {0.0, 0.9, 0.9, 1.1, -5, 1.2}, 13, {}},
  };
  return c;
}

FixtureConfig fine_tune_fixture() {
  FixtureConfig c;
  c.seed = 23;
  c.proveniences = {
      {"site-a", {0.45, 1.25, 1.3, 0.8, 12, 0.8}, 30, {}},
      {"site-b", {-0.1, 1.0, 1.0, 1.0, 0, 1.0}, 15, {}},
      {"site-c", {0.0, 0.9, 0.9, 1.1, -4, 1.2}, 15, {}},
  };
  return c;
}

FixtureConfig transfer_fixture() {
  FixtureConfig c;
  c.seed = 37;
  c.proveniences = {
      {"site-a", {0.55, 1.0, 1.4, 0.7, 15, 1.0}, 40, {}},
      {"site-b", {-0.55, 1.0, 0.8, 1.2, -15, 1.0}, 40, {}},
      {"site-c", {0.0, 1.5, 1.0, 1.0, 0, 1.3}, 40, {}},
      {"site-d", {}, 20, {0, 1, 2}},
  };
  return c;
}

FixtureConfig fixture_by_name(std::string_view name) {
  if (name == "glyph") return glyph_fixture();
  if (name == "fine-tune") return fine_tune_fixture();
  if (name == "transfer") return transfer_fixture();
  throw Error("unknown fixture '" + std::string(name) + "' (expected glyph, fine-tune or transfer)");
}

// ---------------------------------------------------------------------------

namespace {

struct PlacedWedge {
  Eigen::Vector2d head;  // pixels
  Eigen::Vector2d dir;   // unit
  double length = 0;
  double head_width = 0;
  double head_length = 0;
  double depth = 0;
};

Style blend(const std::vector<ProvenienceSpec>& provs, const std::vector<int>& of, Rng& rng) {
  std::vector<double> w;
  double total = 0;
  for (std::size_t i = 0; i < of.size(); ++i) {
    w.push_back(-std::log(std::max(uniform01(rng), 1e-12)));
    total += w.back();
  }
  Style s{0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < of.size(); ++i) {
    const Style& o = provs.at(std::size_t(of[i])).style;
    const double k = w[i] / total;
    s.shear += k * o.shear;
    s.stretch += k * o.stretch;
    s.head_scale += k * o.head_scale;
    s.tail_scale += k * o.tail_scale;
    s.twist_deg += k * o.twist_deg;
    s.depth_scale += k * o.depth_scale;
  }
  return s;
}

std::vector<PlacedWedge> place(const GlyphSpec& glyph, const Style& style, const Eigen::Vector2d& center,
                               double radius, Rng& rng) {
  const double rot = uniform(rng, -8, 8) * kDeg;
  const double scale = radius * uniform(rng, 0.9, 1.1);
  Eigen::Matrix2d a;
  a << style.stretch, style.shear, 0, 1;
  Eigen::Matrix2d r;
  r << std::cos(rot), -std::sin(rot), std::sin(rot), std::cos(rot);
  const Eigen::Matrix2d m = scale * r * a;

  std::vector<PlacedWedge> out;
  for (const auto& w : glyph.wedges) {
    const Eigen::Vector2d head(w.x + uniform(rng, -0.06, 0.06), w.y + uniform(rng, -0.06, 0.06));
    const double ang = (w.angle_deg + style.twist_deg + uniform(rng, -6, 6)) * kDeg;
    const Eigen::Vector2d d = m * Eigen::Vector2d(std::cos(ang), std::sin(ang));
    const bool is_hook = w.length <= w.head_length;
    const double len = w.length * (is_hook ? 1.0 : style.tail_scale) * uniform(rng, 0.88, 1.12);
    PlacedWedge p;
    p.head = center + m * head;
    p.dir = d.normalized();
    p.length = len * d.norm();
    p.head_width = w.head_width * style.head_scale * scale * uniform(rng, 0.9, 1.1);
    p.head_length = std::min(w.head_length * style.head_scale * scale, p.length);
    p.depth = 5.0 * style.depth_scale * uniform(rng, 0.85, 1.15);
    out.push_back(p);
  }
  return out;
}

// Depth of one impression at pixel offset q from its head: a V-shaped
// groove that narrows from the head to the tail and shallows along it.
double wedge_depth(const PlacedWedge& w, const Eigen::Vector2d& q) {
  const double u = q.dot(w.dir);
  const double v = std::abs(q.x() * -w.dir.y() + q.y() * w.dir.x());
  if (u < 0 || u > w.length) return 0;
  const double tail_w = 0.22 * w.head_width;
  double half;
  if (u < w.head_length) {
    half = 0.5 * (w.head_width + (tail_w - w.head_width) * u / w.head_length);
  } else {
    half = 0.5 * tail_w * (1.0 - 0.6 * (u - w.head_length) / std::max(w.length - w.head_length, 1e-9));
  }
  if (v >= half) return 0;
  return w.depth * (1.0 - 0.65 * u / w.length) * (1.0 - v / half);
}

void impress(Eigen::MatrixXd& depth, const PlacedWedge& w) {
  const Eigen::Vector2d tail = w.head + w.dir * w.length;
  const double pad = w.head_width;
  const int x0 = std::max(0, int(std::floor(std::min(w.head.x(), tail.x()) - pad)));
  const int x1 = std::min(int(depth.cols()) - 1, int(std::ceil(std::max(w.head.x(), tail.x()) + pad)));
  const int y0 = std::max(0, int(std::floor(std::min(w.head.y(), tail.y()) - pad)));
  const int y1 = std::min(int(depth.rows()) - 1, int(std::ceil(std::max(w.head.y(), tail.y()) + pad)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = wedge_depth(w, Eigen::Vector2d(x + 0.5, y + 0.5) - w.head);
      depth(y, x) = std::max(depth(y, x), d);
    }
  }
}

Polygon outline(const std::vector<PlacedWedge>& wedges, Rng& rng, int width, int height) {
  double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
  for (const auto& w : wedges) {
    const Eigen::Vector2d n(-w.dir.y(), w.dir.x());
    for (const Eigen::Vector2d& p :
         {Eigen::Vector2d(w.head + n * w.head_width / 2), Eigen::Vector2d(w.head - n * w.head_width / 2),
          Eigen::Vector2d(w.head + w.dir * w.length)}) {
      x0 = std::min(x0, p.x());
      y0 = std::min(y0, p.y());
      x1 = std::max(x1, p.x());
      y1 = std::max(y1, p.y());
    }
  }
  const double m = 3;
  Polygon poly = {{x0 - m, y0 - m}, {x1 + m, y0 - m}, {x1 + m, y1 + m}, {x0 - m, y1 + m}};
  for (auto& p : poly) {
    p.x() = std::clamp(std::round((p.x() + uniform(rng, -1.5, 1.5)) * 2) / 2, 0.0, double(width));
    p.y() = std::clamp(std::round((p.y() + uniform(rng, -1.5, 1.5)) * 2) / 2, 0.0, double(height));
  }
  return poly;
}

// Low-frequency clay relief.
void add_texture(Eigen::MatrixXd& height, Rng& rng) {
  for (int k = 0; k < 6; ++k) {
    const double fx = uniform(rng, 0.005, 0.04), fy = uniform(rng, 0.005, 0.04);
    const double ph = uniform(rng, 0, 6.28318), amp = uniform(rng, 0.2, 0.6);
    for (Eigen::Index y = 0; y < height.rows(); ++y) {
      for (Eigen::Index x = 0; x < height.cols(); ++x) height(y, x) += amp * std::sin(fx * x + fy * y + ph);
    }
  }
}

std::uint8_t to_byte(double v) { return std::uint8_t(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

ImageU8 render(const Eigen::MatrixXd& h, Visualization viz, std::uint64_t noise_seed) {
  const int H = int(h.rows()), W = int(h.cols());
  ImageU8 img(W, H);
  Rng rng(noise_seed);
  auto at = [&](int x, int y) { return h(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1)); };
  const Eigen::Vector3d clay(0.80, 0.66, 0.50);

  int light = -1;
  if (viz >= Visualization::ColorA && viz <= Visualization::ColorH) light = int(viz) - int(Visualization::ColorA);
  const double az = light * 45.0 * kDeg, el = 35.0 * kDeg;
  const Eigen::Vector3d l(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double gx = (at(x + 1, y) - at(x - 1, y)) / 2, gy = (at(x, y + 1) - at(x, y - 1)) / 2;
      const Eigen::Vector3d n = Eigen::Vector3d(-gx, -gy, 1).normalized();
      const double lap = at(x + 1, y) + at(x - 1, y) + at(x, y + 1) + at(x, y - 1) - 4 * at(x, y);
      const double noise = 3.0 * normal01(rng);
      Eigen::Vector3d rgb;
      switch (viz) {
        case Visualization::NormalMap:
          rgb = {encode_normal_component(n.x()), encode_normal_component(n.y()), encode_normal_component(n.z())};
          break;
        case Visualization::SketchA: {
          const double g = (std::abs(lap) > 0.35 || n.z() < 0.8) ? 35 : 245;
          rgb.setConstant(g + noise);
          break;
        }
        case Visualization::SketchB: {
          const double g = 250 - std::min(220.0, 260 * std::abs(lap) + 300 * (1 - n.z()));
          rgb.setConstant(g + noise);
          break;
        }
        case Visualization::Color00: {
          const double shade = 0.2 + 0.8 * std::pow(n.z(), 6) - 0.02 * std::max(0.0, -h(y, x));
          rgb = 255 * shade * clay + Eigen::Vector3d::Constant(noise);
          break;
        }
        default: {
          const double shade = 0.12 + 0.88 * std::max(0.0, n.dot(l)) / l.z();
          rgb = 255 * std::min(shade, 1.25) * 0.8 * clay + Eigen::Vector3d::Constant(noise);
          break;
        }
      }
      for (int c = 0; c < 3; ++c) img.at(x, y)(c) = to_byte(rgb(c));
    }
  }
  return img;
}

void write_fixture(const std::filesystem::path& root, const FixtureConfig& config) {
  const auto& lib = glyph_library();
  if (config.n_classes < 1 || config.n_classes > int(lib.size())) {
    throw Error("fixture supports 1.." + std::to_string(lib.size()) + " classes");
  }
  if (config.proveniences.empty()) throw Error("fixture needs at least one provenience");
  std::filesystem::create_directories(root / "images");

  const int W = config.cols * config.cell_px + 32, H = config.rows * config.cell_px + 32;
  const int per_surface = config.cols * config.rows;
  nlohmann::json doc;
  doc["proveniences"] = nlohmann::json::array();
  doc["surfaces"] = nlohmann::json::array();
  doc["annotations"] = nlohmann::json::array();
  doc["classes"] = nlohmann::json::array();
  for (int c = 0; c < config.n_classes; ++c) doc["classes"].push_back({{"name", lib[std::size_t(c)].name}});

  for (std::size_t pi = 0; pi < config.proveniences.size(); ++pi) {
    const auto& prov = config.proveniences[pi];
    doc["proveniences"].push_back(prov.name);
    Rng rng(stream_seed(config.seed, 0xf1c, pi));
    std::vector<int> signs;
    for (int c = 0; c < config.n_classes; ++c) signs.insert(signs.end(), std::size_t(prov.per_class), c);
    shuffle(signs.begin(), signs.end(), rng);

    int next_id = 0;
    for (std::size_t start = 0, surface = 0; start < signs.size(); start += std::size_t(per_surface), ++surface) {
      const std::string tablet = prov.name + "-T" + std::to_string(surface / 2 + 1);
      const std::string side = surface % 2 == 0 ? "front" : "back";
      Eigen::MatrixXd height = Eigen::MatrixXd::Zero(H, W);
      Eigen::MatrixXd depth = Eigen::MatrixXd::Zero(H, W);
      add_texture(height, rng);
      const std::size_t end = std::min(signs.size(), start + std::size_t(per_surface));
      for (std::size_t i = start; i < end; ++i) {
        const int slot = int(i - start);
        const Eigen::Vector2d center(16 + (slot % config.cols + 0.5) * config.cell_px + uniform(rng, -3, 3),
                                     16 + (slot / config.cols + 0.5) * config.cell_px + uniform(rng, -3, 3));
        const Style style = prov.blend_of.empty() ? prov.style : blend(config.proveniences, prov.blend_of, rng);
        const auto& glyph = lib[std::size_t(signs[i])];
        const auto wedges = place(glyph, style, center, config.sign_radius_px, rng);
        for (const auto& w : wedges) impress(depth, w);
        nlohmann::json poly = nlohmann::json::array();
        for (const auto& p : outline(wedges, rng, W, H)) poly.push_back({p.x(), p.y()});
        char id[64];
        std::snprintf(id, sizeof id, "%s-%04d", prov.name.c_str(), next_id++);
        doc["annotations"].push_back(
            {{"id", id}, {"tablet_id", tablet}, {"side", side}, {"class", glyph.name}, {"polygon", poly}});
      }

      height -= depth;
      nlohmann::json images = nlohmann::json::object();
      for (const auto viz : config.visualizations) {
        const std::string rel = "images/" + tablet + "_" + side + "_" + std::string(to_string(viz)) + ".png";
        write_image(root / rel, render(height, viz, stream_seed(config.seed, 0x1a6, pi * 1000 + surface * 16 + int(viz))));
        images[std::string(to_string(viz))] = rel;
      }
      doc["surfaces"].push_back({{"tablet_id", tablet},
                                 {"side", side},
                                 {"provenience", prov.name},
                                 {"width_px", W},
                                 {"height_px", H},
                                 {"images", images}});
    }
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw Error("cannot write " + (root / "manifest.json").string());
  out << doc.dump(1) << "\n";
}

}  // namespace wedge::synthetic
