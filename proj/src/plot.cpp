#include "wedge/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "wedge/error.hpp"

namespace wedge::plot {

namespace {

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {
    s_ << std::fixed;
    s_.precision(2);
    s_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  Svg& rect(double x, double y, double w, double h, const std::string& fill, const std::string& title = {}) {
    s_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
       << "\">";
    if (!title.empty()) s_ << "<title>" << escape(title) << "</title>";
    s_ << "</rect>\n";
    return *this;
  }
  Svg& line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333", double width = 1) {
    s_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << stroke
       << "\" stroke-width=\"" << width << "\"/>\n";
    return *this;
  }
  Svg& circle(double x, double y, double r, const std::string& fill, const std::string& title = {}) {
    s_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill << "\" fill-opacity=\"0.8\">";
    if (!title.empty()) s_ << "<title>" << escape(title) << "</title>";
    s_ << "</circle>\n";
    return *this;
  }
  Svg& text(double x, double y, const std::string& t, const std::string& anchor = "start", int size = 11,
            const std::string& extra = {}) {
    s_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\" font-size=\"" << size << "\" "
       << extra << ">" << escape(t) << "</text>\n";
    return *this;
  }
  std::string str() {
    s_ << "</svg>\n";
    return s_.str();
  }
  int width() const { return w_; }
  int height() const { return h_; }

 private:
  int w_, h_;
  std::ostringstream s_;
};

std::string percent(double v) {
  std::ostringstream s;
  s.precision(1);
  s << std::fixed << 100 * v;
  return s.str();
}

void y_axis(Svg& svg, double x, double top, double bottom) {
  svg.line(x, top, x, bottom);
  for (int t = 0; t <= 100; t += 20) {
    const double y = bottom - (bottom - top) * t / 100.0;
    svg.line(x - 4, y, x, y).text(x - 6, y + 4, std::to_string(t) + "%", "end");
    if (t > 0) svg.line(x, y, svg.width() - 20, y, "#e5e5e5");
  }
}

void legend(Svg& svg, const std::vector<std::string>& names, double x, double y) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    svg.rect(x, y + 16 * double(i), 10, 10, color(i)).text(x + 14, y + 16 * double(i) + 9, names[i]);
  }
}

}  // namespace

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<BarSeries>& series) {
  const double left = 60, top = 40, bottom_pad = 90, group_w = std::max(40.0, 18.0 * double(series.size()) + 16);
  const int width = int(left + group_w * double(categories.size()) + 160);
  const int height = 360;
  const double bottom = height - bottom_pad;
  Svg svg(width, height);
  svg.text(width / 2.0, 22, title, "middle", 14);
  y_axis(svg, left, top, bottom);
  const double bar_w = (group_w - 12) / double(std::max<std::size_t>(1, series.size()));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + 6 + group_w * double(c);
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() ? std::clamp(series[s].values[c], 0.0, 1.0) : 0.0;
      const double h = (bottom - top) * v;
      svg.rect(gx + bar_w * double(s), bottom - h, bar_w - 2, h, color(s),
               series[s].name + " " + categories[c] + ": " + percent(v) + "%");
    }
    const double cx = gx + (group_w - 12) / 2;
    svg.text(cx, bottom + 14, categories[c], "end", 11, "transform=\"rotate(-40 " + std::to_string(cx) + " " +
                                                           std::to_string(bottom + 14) + ")\"");
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(svg, names, width - 150, top);
  return svg.str();
}

std::string viz_sweep_chart(const std::vector<std::pair<std::string, EvalReport>>& runs) {
  std::vector<std::string> cats;
  BarSeries t1{"top-1", {}}, t5{"top-5", {}};
  for (const auto& [name, r] : runs) {
    cats.push_back(name);
    t1.values.push_back(r.top1);
    t5.values.push_back(r.top5);
  }
  return bar_chart("Accuracy by visualization", cats, {t1, t5});
}

std::string frequency_chart(const FrequencyBinReport& report) {
  const double left = 60, top = 40, bin_w = 110;
  const int width = int(left + bin_w * double(report.bins.size()) + 40), height = 340;
  const double bottom = height - 60;
  Svg svg(width, height);
  svg.text(width / 2.0, 22, "Top-1 accuracy by class frequency", "middle", 14);
  y_axis(svg, left, top, bottom);
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    const double x0 = left + 10 + bin_w * double(b);
    if (bin.mean_top1) {
      const double h = (bottom - top) * *bin.mean_top1;
      svg.rect(x0, bottom - h, bin_w - 20, h, "#c6dbef");
    }
    for (std::size_t i = 0; i < bin.classes.size(); ++i) {
      const auto& [name, a] = bin.classes[i];
      const double jitter = (bin_w - 30) * (double(i) + 0.5) / double(bin.classes.size());
      svg.circle(x0 + 5 + jitter, bottom - (bottom - top) * a.top1, 3, color(0), name + ": " + percent(a.top1) + "%");
    }
    svg.text(x0 + (bin_w - 20) / 2, bottom + 16, bin.label(), "middle");
    svg.text(x0 + (bin_w - 20) / 2, bottom + 30, std::to_string(bin.classes.size()) + " classes", "middle", 10);
  }
  return svg.str();
}

std::string transfer_chart(const TransferMatrix& matrix) {
  std::vector<std::string> cats;
  std::vector<BarSeries> series;
  for (const auto& col : matrix.columns) series.push_back({col + (matrix.held_out.contains(col) ? " (held out)" : ""), {}});
  for (const auto& row : matrix.rows) {
    std::string name;
    for (const auto& p : row.training) name += (name.empty() ? "" : "+") + p;
    cats.push_back(name);
    for (std::size_t c = 0; c < matrix.columns.size(); ++c) {
      const auto* cell = row.cell(matrix.columns[c]);
      series[c].values.push_back(cell ? cell->top1 : 0.0);
    }
  }
  return bar_chart("Top-1 by training provenience", cats, series);
}

std::string grid_heatmap(const GridReport& report) {
  const int k = int(report.grid);
  const double cell = 90, left = 30, top = 50;
  const int width = int(left * 2 + cell * k + 120), height = int(top + cell * k + 40);
  Svg svg(width, height);
  svg.text(width / 2.0, 22, "Top-1 change by tablet region (pp)", "middle", 14);
  double span = 1;
  for (const auto& c : report.cells) span = std::max(span, std::abs(c.delta_pp));
  for (const auto& c : report.cells) {
    const double x = left + cell * c.cell.col, y = top + cell * c.cell.row;
    const double t = c.support > 0 ? c.delta_pp / span : 0;
    const int r = t < 0 ? 255 : int(255 - 155 * t), g = int(255 - 100 * std::abs(t)), b = t > 0 ? 255 : int(255 + 155 * t);
    char fill[8];
    std::snprintf(fill, sizeof fill, "#%02x%02x%02x", std::clamp(r, 0, 255), std::clamp(g, 0, 255), std::clamp(b, 0, 255));
    svg.rect(x, y, cell - 2, cell - 2, c.support > 0 ? fill : "#eeeeee");
    if (c.support > 0) {
      std::ostringstream d;
      d.precision(1);
      d << std::fixed << (c.delta_pp >= 0 ? "+" : "") << c.delta_pp;
      svg.text(x + cell / 2, y + 22, d.str(), "middle", 13);
    }
    svg.text(x + cell / 2, y + cell - 10, "n=" + std::to_string(c.support), "middle", 10);
    if (c.normal) {
      const double cx = x + cell / 2, cy = y + cell / 2 + 8;
      svg.line(cx, cy, cx + 30 * c.normal->nx, cy + 30 * c.normal->ny, "#444", 2).circle(cx, cy, 2, "#444");
    }
  }
  svg.text(left + cell * k + 10, top + 12, "baseline " + percent(report.baseline_top1) + "%");
  svg.text(left + cell * k + 10, top + 28, "compared " + percent(report.compared_top1) + "%");
  return svg.str();
}

std::string scatter(const std::vector<ScatterPoint>& points, ColorBy color_by, const std::string& title) {
  const int width = 640, height = 520;
  const double left = 20, top = 40, plot_w = 460, plot_h = 460;
  Svg svg(width, height);
  svg.text(plot_w / 2 + left, 22, title, "middle", 14);
  if (points.empty()) return svg.str();
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double sx = plot_w / std::max(x1 - x0, 1e-12), sy = plot_h / std::max(y1 - y0, 1e-12);
  std::map<std::string, std::size_t> groups;
  for (const auto& p : points) groups.emplace(color_by == ColorBy::Class ? p.sign_class : p.provenience, 0);
  std::size_t i = 0;
  for (auto& [_, idx] : groups) idx = i++;
  for (const auto& p : points) {
    const auto& key = color_by == ColorBy::Class ? p.sign_class : p.provenience;
    svg.circle(left + (p.x - x0) * sx, top + (y1 - p.y) * sy, 3.5, color(groups.at(key)),
               p.id + " " + p.sign_class + " " + p.provenience);
  }
  std::vector<std::string> names;
  for (const auto& [name, _] : groups) names.push_back(name);
  legend(svg, names, left + plot_w + 30, top);
  return svg.str();
}

std::string scatter(const EmbeddingSet& e, const Projection2D& p, ColorBy color_by) {
  if (p.coords.rows() != e.size()) throw ShapeError("projection and embedding differ in length");
  std::vector<ScatterPoint> pts;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const auto& r = e.rows[std::size_t(i)];
    pts.push_back({r.id, r.sign_class, r.provenience, p.coords(i, 0), p.coords(i, 1)});
  }
  return scatter(pts, color_by);
}

std::vector<ScatterPoint> read_projection_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  bool header = false;
  std::vector<ScatterPoint> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("id,class,provenience,x,y", 0) != 0) throw Error(path.string() + ": not a projection file");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    ScatterPoint p;
    std::string x, y;
    std::getline(ss, p.id, ',');
    std::getline(ss, p.sign_class, ',');
    std::getline(ss, p.provenience, ',');
    std::getline(ss, x, ',');
    std::getline(ss, y, ',');
    p.x = std::stod(x);
    p.y = std::stod(y);
    out.push_back(p);
  }
  return out;
}

void write_svg(const std::filesystem::path& path, const std::string& svg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << svg;
}

}  // namespace wedge::plot
