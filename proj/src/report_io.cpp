#include "wedge/report_io.hpp"

#include <fstream>
#include <sstream>

#include "wedge/error.hpp"

namespace wedge {

using nlohmann::json;

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json accuracy_map(const std::map<std::string, Accuracy>& m) {
  json out = json::object();
  for (const auto& [k, a] : m) out[k] = to_json(a);
  return out;
}

std::map<std::string, Accuracy> accuracy_map_from(const json& j) {
  std::map<std::string, Accuracy> out;
  for (const auto& [k, v] : j.items()) out[k] = {v.at("support").get<int>(), v.at("top1").get<double>(), v.at("top5").get<double>()};
  return out;
}

json stats_json(const std::optional<RepeatStats>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"std", optional_json(s->std)}};
}

std::optional<RepeatStats> stats_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  RepeatStats s;
  s.mean = j.at("mean").get<double>();
  if (!j.at("std").is_null()) s.std = j.at("std").get<double>();
  return s;
}

}  // namespace

json to_json(const Accuracy& a) { return {{"support", a.support}, {"top1", a.top1}, {"top5", a.top5}}; }

json to_json(const EvalReport& r, bool include_examples) {
  json j;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  j["support"] = r.support;
  j["per_class"] = accuracy_map(r.per_class);
  j["per_provenience"] = accuracy_map(r.per_provenience);
  j["repeats"] = json::array();
  for (const auto& [t1, t5] : r.repeats) j["repeats"].push_back({{"top1", t1}, {"top5", t5}});
  j["top1_stats"] = stats_json(r.top1_stats);
  j["top5_stats"] = stats_json(r.top5_stats);
  if (include_examples) {
    j["examples"] = json::array();
    for (const auto& e : r.examples) {
      j["examples"].push_back({{"id", e.id},
                               {"class", e.sign_class},
                               {"label", e.label},
                               {"provenience", e.provenience},
                               {"surface_id", e.surface_id},
                               {"centroid", {e.centroid.x(), e.centroid.y()}},
                               {"rank", e.rank}});
    }
  }
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.top1 = j.at("top1").get<double>();
    r.top5 = j.at("top5").get<double>();
    r.support = j.at("support").get<int>();
    r.per_class = accuracy_map_from(j.value("per_class", json::object()));
    r.per_provenience = accuracy_map_from(j.value("per_provenience", json::object()));
    for (const auto& p : j.value("repeats", json::array())) r.repeats.emplace_back(p.at("top1").get<double>(), p.at("top5").get<double>());
    if (j.contains("top1_stats")) r.top1_stats = stats_from(j.at("top1_stats"));
    if (j.contains("top5_stats")) r.top5_stats = stats_from(j.at("top5_stats"));
    for (const auto& e : j.value("examples", json::array())) {
      ExampleResult x;
      x.id = e.at("id").get<std::string>();
      x.sign_class = e.at("class").get<std::string>();
      x.label = e.at("label").get<int>();
      x.provenience = e.at("provenience").get<std::string>();
      x.surface_id = e.at("surface_id").get<std::string>();
      x.centroid = Point(e.at("centroid")[0].get<double>(), e.at("centroid")[1].get<double>());
      x.rank = e.at("rank").get<int>();
      r.examples.push_back(std::move(x));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed evaluation report: ") + e.what());
  }
}

json to_json(const TrainReport& r) {
  json j;
  j["stage"] = r.stage;
  j["config"] = r.config;
  j["init"] = r.init;
  j["epochs"] = json::array();
  for (const auto& e : r.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  }
  j["train_top1"] = r.train_top1;
  j["train_top5"] = r.train_top5;
  j["test_top1"] = optional_json(r.test_top1);
  j["test_top5"] = optional_json(r.test_top5);
  j["wall_seconds"] = r.wall_seconds;
  j["checkpoint"] = r.checkpoint;
  return j;
}

json to_json(const TransferMatrix& m) {
  json j;
  j["columns"] = m.columns;
  j["held_out"] = m.held_out;
  j["rows"] = json::array();
  for (const auto& r : m.rows) {
    json row;
    row["training"] = r.training;
    row["mean_in_distribution"] = optional_json(r.mean_in_distribution);
    row["cells"] = json::array();
    for (const auto& c : r.cells) {
      row["cells"].push_back({{"test", c.test},
                              {"top1", c.top1},
                              {"top5", c.top5},
                              {"support", c.support},
                              {"in_distribution", c.in_distribution},
                              {"ood_ratio", optional_json(c.ood_ratio)}});
    }
    j["rows"].push_back(row);
  }
  return j;
}

json to_json(const FrequencyBinReport& r) {
  json j;
  j["bins"] = json::array();
  for (const auto& b : r.bins) {
    json classes = json::array();
    for (const auto& [name, a] : b.classes) {
      classes.push_back({{"name", name}, {"support", a.support}, {"top1", a.top1}, {"top5", a.top5}});
    }
    j["bins"].push_back({{"label", b.label()},
                         {"lower", b.lower},
                         {"upper", optional_json(b.upper)},
                         {"n_classes", b.classes.size()},
                         {"mean_top1", optional_json(b.mean_top1)},
                         {"mean_top5", optional_json(b.mean_top5)},
                         {"classes", classes}});
  }
  return j;
}

json to_json(const GridReport& r) {
  json j;
  const int k = int(r.grid);
  j["grid"] = std::to_string(k) + "x" + std::to_string(k);
  j["support"] = r.support;
  j["baseline_top1"] = r.baseline_top1;
  j["compared_top1"] = r.compared_top1;
  j["cells"] = json::array();
  for (const auto& c : r.cells) {
    j["cells"].push_back({{"row", c.cell.row},
                          {"col", c.cell.col},
                          {"support", c.support},
                          {"baseline_top1", c.baseline_top1},
                          {"compared_top1", c.compared_top1},
                          {"baseline_top5", c.baseline_top5},
                          {"compared_top5", c.compared_top5},
                          {"delta_pp", c.delta_pp},
                          {"normal", c.normal ? json{c.normal->nx, c.normal->ny, c.normal->nz} : json(nullptr)}});
  }
  return j;
}

json to_json(const FrequencyHistogram& h, int min_instances) {
  json j;
  j["total"] = h.total;
  j["classes"] = h.counts;
  j["min_instances"] = min_instances;
  j["classes_at_least_min"] = h.classes_at_least(min_instances);
  j["coverage_at_min"] = h.coverage(min_instances);
  return j;
}

json random_baseline(int n_classes) {
  if (n_classes < 1) throw Error("random baseline needs at least one class");
  return {{"n_classes", n_classes},
          {"top1", 1.0 / n_classes},
          {"top5", std::min(5, n_classes) / double(n_classes)}};
}

json reference_values(std::string_view analysis) {
  json j;
  j["note"] = "published figures on the original corpus, for comparison only";
  if (analysis == "eval" || analysis == "experiment") {
    j["random_baseline_206_classes"] = {{"top1", 0.0048}, {"top5", 0.0242}};
    j["nippur_fine_tuned_top1"] = {{"mean", 0.871}, {"std", 0.003}};
  } else if (analysis == "viz-sweep") {
    j["best_visualization"] = "SketchA";
    j["best_top1"] = 0.828;
  } else if (analysis == "transfer") {
    j["ood_ratio_single_provenience"] = 0.514;
    j["ood_ratio_all_proveniences"] = 0.934;
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace wedge
