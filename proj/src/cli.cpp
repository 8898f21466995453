#include "wedge/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "wedge/error.hpp"
#include "wedge/evaluator.hpp"
#include "wedge/features.hpp"
#include "wedge/plot.hpp"
#include "wedge/report_io.hpp"
#include "wedge/service.hpp"
#include "wedge/synthetic.hpp"

namespace wedge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentSpec::validate() const {
  if (corpus.empty()) throw std::invalid_argument("a corpus root is required (--corpus)");
  if (min_instances < 1) throw std::invalid_argument("min_instances must be positive");
  if (repeats < 1) throw std::invalid_argument("repeats must be positive");
  train.validate();
  if (fine_tune) fine_tune->validate();
}

json to_json(const ExperimentSpec& s) {
  json j;
  j["corpus"] = s.corpus.generic_string();
  j["visualization"] = std::string(to_string(s.visualization));
  j["proveniences"] = s.proveniences;
  j["split_seed"] = s.split_seed;
  j["min_instances"] = s.min_instances;
  j["train"] = to_json(s.train);
  j["fine_tune"] = s.fine_tune ? to_json(*s.fine_tune) : json(nullptr);
  j["fine_tune_proveniences"] = s.fine_tune_proveniences;
  j["repeats"] = s.repeats;
  j["output"] = s.output.generic_string();
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("spec must be a JSON object");
  ExperimentSpec s;
  try {
    s.corpus = j.value("corpus", std::string());
    if (j.contains("visualization")) {
      const auto tag = j.at("visualization").get<std::string>();
      const auto v = parse_visualization(tag);
      if (!v) throw std::invalid_argument("unknown visualization '" + tag + "'");
      s.visualization = *v;
    }
    for (const auto& p : j.value("proveniences", json::array())) s.proveniences.insert(p.get<std::string>());
    s.split_seed = j.value("split_seed", s.split_seed);
    s.min_instances = j.value("min_instances", s.min_instances);
    if (j.contains("train")) s.train = train_config_from_json(j.at("train"));
    if (j.contains("fine_tune") && !j.at("fine_tune").is_null()) s.fine_tune = fine_tune_config_from_json(j.at("fine_tune"));
    for (const auto& p : j.value("fine_tune_proveniences", json::array())) s.fine_tune_proveniences.insert(p.get<std::string>());
    s.repeats = j.value("repeats", s.repeats);
    s.output = j.value("output", std::string("out"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed spec: ") + e.what());
  }
  return s;
}

std::string spec_hash(const ExperimentSpec& spec) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_json(spec).dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void log(const std::string& msg) { std::cerr << msg << std::endl; }

// ---------------------------------------------------------------------------
// Flags shared by every data-driven subcommand. A spec file is read first;
// flags given on the command line override its fields.

struct SpecFlags {
  std::string spec_file, corpus, viz, backbone, pretrained, out;
  std::vector<std::string> proveniences, ft_proveniences;
  std::uint64_t split_seed = 0, seed = 0;
  int min_instances = 0, epochs = 0, batch_size = 0, ft_epochs = 0, ft_batch_size = 0, repeats = 0;
  double lr = 0, lr_min = 0, weight_decay = 0, ft_lr_start = 0, ft_lr_end = 0;
  bool no_augment = false, fine_tune = false;
  std::map<std::string, CLI::Option*> opt;

  bool given(const std::string& name) const { return opt.at(name)->count() > 0; }
};

void add_spec_flags(CLI::App* app, SpecFlags& f) {
  f.opt["spec"] = app->add_option("--spec", f.spec_file, "Experiment spec (JSON)");
  f.opt["corpus"] = app->add_option("--corpus", f.corpus, "Corpus root containing manifest.json");
  f.opt["viz"] = app->add_option("--viz", f.viz, "Visualization tag");
  f.opt["provenience"] = app->add_option("--provenience", f.proveniences, "Restrict to these proveniences");
  f.opt["split-seed"] = app->add_option("--split-seed", f.split_seed);
  f.opt["min-instances"] = app->add_option("--min-instances", f.min_instances);
  f.opt["backbone"] = app->add_option("--backbone", f.backbone, "resnet50, resnet18, resnext50_32x4d or compact");
  f.opt["epochs"] = app->add_option("--epochs", f.epochs);
  f.opt["batch-size"] = app->add_option("--batch-size", f.batch_size);
  f.opt["lr"] = app->add_option("--lr", f.lr);
  f.opt["lr-min"] = app->add_option("--lr-min", f.lr_min);
  f.opt["weight-decay"] = app->add_option("--weight-decay", f.weight_decay);
  f.opt["seed"] = app->add_option("--seed", f.seed, "Training seed");
  f.opt["no-augment"] = app->add_flag("--no-augment", f.no_augment);
  f.opt["pretrained"] = app->add_option("--pretrained", f.pretrained, "Checkpoint whose trunk initializes the backbone");
  f.opt["fine-tune"] = app->add_flag("--fine-tune", f.fine_tune, "Add a fine-tuning stage");
  f.opt["ft-epochs"] = app->add_option("--ft-epochs", f.ft_epochs);
  f.opt["ft-batch-size"] = app->add_option("--ft-batch-size", f.ft_batch_size);
  f.opt["ft-lr-start"] = app->add_option("--ft-lr-start", f.ft_lr_start);
  f.opt["ft-lr-end"] = app->add_option("--ft-lr-end", f.ft_lr_end);
  f.opt["ft-provenience"] = app->add_option("--ft-provenience", f.ft_proveniences);
  f.opt["repeats"] = app->add_option("--repeats", f.repeats);
  f.opt["out"] = app->add_option("--out", f.out, "Output directory");
}

ExperimentSpec resolve(const SpecFlags& f) {
  ExperimentSpec s;
  if (f.given("spec")) {
    std::ifstream in(f.spec_file);
    if (!in) throw std::invalid_argument("cannot open spec " + f.spec_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(f.spec_file + ": " + e.what());
    }
    s = spec_from_json(j);
  }
  if (f.given("corpus")) s.corpus = f.corpus;
  if (f.given("viz")) {
    const auto v = parse_visualization(f.viz);
    if (!v) throw std::invalid_argument("unknown visualization '" + f.viz + "'");
    s.visualization = *v;
  }
  if (f.given("provenience")) s.proveniences = {f.proveniences.begin(), f.proveniences.end()};
  if (f.given("split-seed")) s.split_seed = f.split_seed;
  if (f.given("min-instances")) s.min_instances = f.min_instances;
  if (f.given("backbone")) {
    const auto b = nn::parse_backbone(f.backbone);
    if (!b) throw std::invalid_argument("unknown backbone '" + f.backbone + "'");
    s.train.backbone = *b;
  }
  if (f.given("epochs")) s.train.epochs = f.epochs;
  if (f.given("batch-size")) s.train.batch_size = f.batch_size;
  if (f.given("lr")) s.train.lr = f.lr;
  if (f.given("lr-min")) s.train.lr_min = f.lr_min;
  if (f.given("weight-decay")) s.train.weight_decay = f.weight_decay;
  if (f.given("seed")) s.train.seed = f.seed;
  if (f.no_augment) s.train.augment.enabled = false;
  if (f.given("pretrained")) s.train.pretrained = f.pretrained;
  const bool any_ft = f.fine_tune || f.given("ft-epochs") || f.given("ft-batch-size") || f.given("ft-lr-start") ||
                      f.given("ft-lr-end") || f.given("ft-provenience");
  if (any_ft && !s.fine_tune) s.fine_tune = FineTuneConfig{};
  if (s.fine_tune) {
    if (f.given("ft-epochs")) s.fine_tune->epochs = f.ft_epochs;
    if (f.given("ft-batch-size")) s.fine_tune->batch_size = f.ft_batch_size;
    if (f.given("ft-lr-start")) s.fine_tune->lr_start = f.ft_lr_start;
    if (f.given("ft-lr-end")) s.fine_tune->lr_end = f.ft_lr_end;
    if (!f.given("seed")) s.fine_tune->seed = s.train.seed;
  }
  if (f.given("ft-provenience")) s.fine_tune_proveniences = {f.ft_proveniences.begin(), f.ft_proveniences.end()};
  if (f.given("repeats")) s.repeats = f.repeats;
  if (f.given("out")) s.output = f.out;
  return s;
}

// ---------------------------------------------------------------------------

struct Run {
  ExperimentSpec spec;
  std::string hash;

  fs::path out(const std::string& rel) const { return spec.output / rel; }

  json stamp(json j) const {
    j["spec_hash"] = hash;
    j["spec"] = to_json(spec);
    return j;
  }
};

Run make_run(const SpecFlags& flags) {
  Run r{resolve(flags), {}};
  r.spec.validate();
  r.hash = spec_hash(r.spec);
  return r;
}

CorpusManifest load_corpus(const ExperimentSpec& spec) {
  log("loading corpus " + spec.corpus.string());
  return load_manifest(spec.corpus);
}

DatasetSplit make_split(const CorpusManifest& m, const ExperimentSpec& spec, std::uint64_t seed) {
  const auto view = filter(m, spec.proveniences, spec.visualization);
  return build_split(view, seed, spec.min_instances);
}

void save_split(const Run& run, const DatasetSplit& split, const fs::path& path) {
  json j = json::parse(split_json(split));
  j["spec_hash"] = run.hash;
  write_json(path, j);
}

DatasetSplit split_for(const Run& run, const CorpusManifest& m, const std::string& split_file) {
  if (!split_file.empty()) return read_split(split_file);
  const auto path = run.out("split.json");
  if (fs::exists(path)) {
    log("using " + path.string());
    return read_split(path);
  }
  auto split = make_split(m, run.spec, run.spec.split_seed);
  save_split(run, split, path);
  return split;
}

EpochCallback epoch_logger(const std::string& stage) {
  return [stage](const EpochStats& e) {
    std::ostringstream s;
    s << stage << " epoch " << e.epoch << "  lr " << e.lr << "  loss " << e.loss << "  acc " << e.accuracy;
    log(s.str());
  };
}

void save_model(Model& model, const Run& run, const fs::path& path) {
  model.info().config["spec_hash"] = run.hash;
  save_checkpoint(model, path);
  log("wrote " + path.string());
}

struct StageResult {
  TrainResult base;
  std::optional<TrainResult> tuned;
  EvalReport eval;  // final model on the target test subset
};

StageResult train_stages(const Run& run, const CorpusManifest& m, const DatasetSplit& split, ImageCache& cache,
                         int repeat) {
  TrainConfig tc = run.spec.train;
  tc.seed = run.spec.train.seed + std::uint64_t(repeat);
  const auto train_set = build_samples(m, split.train_ids, run.spec.visualization, cache);
  const auto test_set = build_samples(m, split.test_ids, run.spec.visualization, cache);
  log("training on " + std::to_string(train_set.size()) + " crops, testing on " + std::to_string(test_set.size()));
  StageResult out{train(train_set, test_set, m.vocabulary, tc, epoch_logger("train")), std::nullopt, {}};

  const auto target_test = restrict_to(test_set, run.spec.fine_tune_proveniences);
  if (run.spec.fine_tune) {
    FineTuneConfig fc = *run.spec.fine_tune;
    fc.seed += std::uint64_t(repeat);
    const auto ft_train = restrict_to(train_set, run.spec.fine_tune_proveniences);
    out.tuned = fine_tune(out.base.model, ft_train, target_test, m.vocabulary, fc, epoch_logger("fine-tune"));
  }
  const Model& final_model = out.tuned ? out.tuned->model : out.base.model;
  if (!target_test.empty()) out.eval = evaluate(final_model, target_test, final_model.info().normalization);
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_validate(const SpecFlags& flags, bool check_dimensions) {
  auto spec = resolve(flags);
  if (spec.corpus.empty()) throw std::invalid_argument("a corpus root is required (--corpus)");
  const auto m = load_manifest(spec.corpus, check_dimensions);
  const auto hist = frequency_histogram(m);
  std::map<Visualization, int> viz_count;
  for (const auto& s : m.surfaces) {
    for (const auto v : s.available()) ++viz_count[v];
  }
  std::cout << "corpus " << m.root.string() << "\n"
            << "  proveniences: " << m.proveniences.size() << "\n"
            << "  surfaces: " << m.surfaces.size() << "\n"
            << "  annotations: " << m.annotations.size() << "\n"
            << "  classes: " << m.vocabulary.size() << " (" << hist.classes_at_least(spec.min_instances)
            << " with >= " << spec.min_instances << " instances, covering " << 100 * hist.coverage(spec.min_instances)
            << "% of annotations)\n"
            << "  vocabulary fingerprint: " << m.vocabulary.fingerprint() << "\n";
  for (const auto v : kAllVisualizations) {
    std::cout << "  " << to_string(v) << ": " << viz_count[v] << "/" << m.surfaces.size() << " surfaces\n";
  }
  return 0;
}

int cmd_split(const SpecFlags& flags) {
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  const auto split = make_split(m, run.spec, run.spec.split_seed);
  save_split(run, split, run.out("split.json"));
  std::cout << "train " << split.train_ids.size() << ", test " << split.test_ids.size() << ", classes "
            << split.included_classes.size() << " (excluded " << split.excluded_classes.size() << ")\n";
  return 0;
}

int cmd_train(const SpecFlags& flags) {
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  ImageCache cache;
  const auto split = make_split(m, run.spec, run.spec.split_seed);
  save_split(run, split, run.out("split.json"));
  auto r = train_stages(run, m, split, cache, 0);

  r.base.report.checkpoint = run.out("checkpoints/model.ckpt").string();
  save_model(r.base.model, run, r.base.report.checkpoint);
  write_json(run.out("reports/train.json"), run.stamp(to_json(r.base.report)));
  if (r.tuned) {
    r.tuned->report.checkpoint = run.out("checkpoints/model_ft.ckpt").string();
    save_model(r.tuned->model, run, r.tuned->report.checkpoint);
    write_json(run.out("reports/fine_tune.json"), run.stamp(to_json(r.tuned->report)));
  }
  std::cout << "train top-1 " << r.base.report.train_top1;
  if (r.base.report.test_top1) std::cout << ", test top-1 " << *r.base.report.test_top1;
  if (r.tuned && r.tuned->report.test_top1) std::cout << ", fine-tuned target top-1 " << *r.tuned->report.test_top1;
  std::cout << "\n";
  return 0;
}

int cmd_fine_tune(const SpecFlags& flags, const std::string& checkpoint) {
  auto run = make_run(flags);
  if (!run.spec.fine_tune) {
    run.spec.fine_tune = FineTuneConfig{};
    run.hash = spec_hash(run.spec);
  }
  const auto m = load_corpus(run.spec);
  ImageCache cache;
  const auto split = split_for(run, m, "");
  const Model base = load_checkpoint(checkpoint, &m.vocabulary);
  const auto train_set = restrict_to(build_samples(m, split.train_ids, run.spec.visualization, cache), run.spec.fine_tune_proveniences);
  const auto test_set = restrict_to(build_samples(m, split.test_ids, run.spec.visualization, cache), run.spec.fine_tune_proveniences);
  auto r = fine_tune(base, train_set, test_set, m.vocabulary, *run.spec.fine_tune, epoch_logger("fine-tune"));
  r.report.checkpoint = run.out("checkpoints/model_ft.ckpt").string();
  save_model(r.model, run, r.report.checkpoint);
  write_json(run.out("reports/fine_tune.json"), run.stamp(to_json(r.report)));
  return 0;
}

int cmd_eval(const SpecFlags& flags, const std::string& checkpoint, const std::string& split_file,
             const std::string& subset, const std::string& name) {
  if (checkpoint.empty()) throw std::invalid_argument("eval needs a trained model (--checkpoint PATH)");
  auto spec = resolve(flags);
  const Model model = load_checkpoint(checkpoint);
  if (!flags.given("viz") && !flags.given("spec") && model.info().visualization) spec.visualization = *model.info().visualization;
  Run run{spec, {}};
  run.spec.validate();
  run.hash = spec_hash(run.spec);
  const auto m = load_corpus(run.spec);
  if (model.fingerprint() != m.vocabulary.fingerprint()) {
    throw FingerprintMismatch("checkpoint vocabulary " + model.fingerprint() + " does not match corpus vocabulary " +
                              m.vocabulary.fingerprint());
  }
  ImageCache cache;
  std::vector<std::string> ids;
  if (subset == "all") {
    const auto view = filter(m, run.spec.proveniences, run.spec.visualization);
    for (std::size_t i = 0; i < view.size(); ++i) ids.push_back(view[i].id);
  } else {
    const auto split = split_for(run, m, split_file);
    ids = subset == "train" ? split.train_ids : split.test_ids;
  }
  const auto samples = build_samples(m, ids, run.spec.visualization, cache);
  const auto report = evaluate(model, samples, model.info().normalization);
  json j = run.stamp(to_json(report));
  j["checkpoint"] = checkpoint;
  j["model_fingerprint"] = model.fingerprint();
  j["subset"] = subset;
  j["visualization"] = std::string(to_string(run.spec.visualization));
  j["random_baseline"] = random_baseline(model.n_classes());
  j["reference_values"] = reference_values("eval");
  const auto path = run.out("reports/" + name + ".json");
  write_json(path, j);
  std::cout << "top-1 " << report.top1 << ", top-5 " << report.top5 << " over " << report.support << " signs -> "
            << path.string() << "\n";
  return 0;
}

int cmd_experiment(const SpecFlags& flags) {
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  ImageCache cache;
  json stages = json::array();
  const auto report = run_repeats(
      [&](int repeat, std::uint64_t seed) {
        log("repeat " + std::to_string(repeat) + " (split seed " + std::to_string(seed) + ")");
        const auto split = make_split(m, run.spec, seed);
        save_split(run, split, run.out("splits/split_" + std::to_string(repeat) + ".json"));
        auto r = train_stages(run, m, split, cache, repeat);
        Model& final_model = r.tuned ? r.tuned->model : r.base.model;
        save_model(final_model, run, run.out("checkpoints/repeat_" + std::to_string(repeat) + ".ckpt"));
        json stage = {{"repeat", repeat}, {"split_seed", seed}, {"train", to_json(r.base.report)}};
        stage["fine_tune"] = r.tuned ? to_json(r.tuned->report) : json(nullptr);
        stages.push_back(stage);
        return r.eval;
      },
      run.spec.repeats, run.spec.split_seed);
  json j = run.stamp(to_json(report));
  j["stages"] = stages;
  j["random_baseline"] = random_baseline(m.vocabulary.size());
  j["reference_values"] = reference_values("experiment");
  write_json(run.out("reports/experiment.json"), j);
  std::cout << "top-1 " << report.top1_stats->mean;
  if (report.top1_stats->std) std::cout << " +/- " << *report.top1_stats->std;
  std::cout << " over " << run.spec.repeats << " repeats\n";
  return 0;
}

int cmd_viz_sweep(const SpecFlags& flags, const std::vector<std::string>& tags) {
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  std::vector<Visualization> vizs;
  if (tags.empty()) {
    vizs.assign(kAllVisualizations.begin(), kAllVisualizations.end());
  } else {
    for (const auto& t : tags) {
      const auto v = parse_visualization(t);
      if (!v) throw std::invalid_argument("unknown visualization '" + t + "'");
      vizs.push_back(*v);
    }
  }
  std::vector<std::pair<std::string, EvalReport>> runs;
  json results = json::object();
  for (const auto v : vizs) {
    Run r = run;
    r.spec.visualization = v;
    const std::string tag(to_string(v));
    log("visualization " + tag);
    ImageCache cache;  // one visualization at a time keeps memory flat
    const auto split = make_split(m, r.spec, r.spec.split_seed);
    auto stages = train_stages(r, m, split, cache, 0);
    json e = to_json(stages.eval, true);
    e["spec_hash"] = run.hash;
    e["visualization"] = tag;
    write_json(run.out("reports/eval_" + tag + ".json"), e);
    results[tag] = {{"top1", stages.eval.top1}, {"top5", stages.eval.top5}, {"support", stages.eval.support}};
    runs.emplace_back(tag, stages.eval);
  }
  json j = run.stamp({{"results", results}, {"reference_values", reference_values("viz-sweep")}});
  write_json(run.out("reports/viz_sweep.json"), j);
  plot::write_svg(run.out("plots/viz_sweep.svg"), plot::viz_sweep_chart(runs));
  return 0;
}

int cmd_transfer(const SpecFlags& flags, const std::vector<std::string>& held_out, const std::vector<std::string>& combos) {
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  const std::set<std::string> held(held_out.begin(), held_out.end());
  for (const auto& h : held) {
    if (std::find(m.proveniences.begin(), m.proveniences.end(), h) == m.proveniences.end()) {
      throw std::invalid_argument("unknown provenience '" + h + "'");
    }
  }
  std::vector<std::set<std::string>> rows;
  if (combos.empty()) {
    std::set<std::string> all;
    for (const auto& p : m.proveniences) {
      if (held.contains(p)) continue;
      rows.push_back({p});
      all.insert(p);
    }
    if (all.size() > 1) rows.push_back(all);
  } else {
    for (const auto& c : combos) {
      std::set<std::string> row;
      std::stringstream ss(c);
      std::string p;
      while (std::getline(ss, p, '+')) {
        if (!p.empty()) row.insert(p);
      }
      rows.push_back(row);
    }
  }
  ImageCache cache;
  const auto matrix = transfer_matrix(m, rows, held, run.spec.visualization, run.spec.train,
                                      {run.spec.split_seed, run.spec.min_instances}, cache);
  json j = run.stamp(to_json(matrix));
  j["reference_values"] = reference_values("transfer");
  write_json(run.out("reports/transfer.json"), j);
  plot::write_svg(run.out("plots/transfer.svg"), plot::transfer_chart(matrix));
  for (const auto& r : matrix.rows) {
    std::string name;
    for (const auto& p : r.training) name += (name.empty() ? "" : "+") + p;
    std::cout << name << ":";
    for (const auto& c : r.cells) {
      std::cout << " " << c.test << "=" << c.top1;
      if (c.ood_ratio) std::cout << " (ratio " << *c.ood_ratio << ")";
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_grid_report(const SpecFlags& flags, const std::string& baseline, const std::string& compared, int k) {
  if (baseline.empty() || compared.empty()) throw std::invalid_argument("grid-report needs --baseline and --compared");
  if (k != 3 && k != 5) throw std::invalid_argument("--grid must be 3 or 5");
  auto spec = resolve(flags);
  const auto b = eval_report_from_json(read_json(baseline));
  const auto c = eval_report_from_json(read_json(compared));
  std::map<std::string, Eigen::Vector3d> normals;
  if (!spec.corpus.empty()) {
    const auto m = load_corpus(spec);
    std::vector<std::string> ids;
    for (const auto& e : c.examples) ids.push_back(e.id);
    ImageCache cache;
    normals = sign_normals(select_ids(m, ids), cache);
  }
  const auto report = grid_report(c, b, GridSize(k), normals.empty() ? nullptr : &normals);
  const std::string tag = std::to_string(k) + "x" + std::to_string(k);
  json j = to_json(report);
  j["spec_hash"] = spec_hash(spec);
  j["baseline"] = baseline;
  j["compared"] = compared;
  write_json(spec.output / ("reports/grid_" + tag + ".json"), j);
  plot::write_svg(spec.output / ("plots/grid_" + tag + ".svg"), plot::grid_heatmap(report));
  return 0;
}

int cmd_freq_report(const SpecFlags& flags, const std::string& eval_file, const std::vector<int>& edges) {
  if (eval_file.empty()) throw std::invalid_argument("freq-report needs --eval");
  const auto run = make_run(flags);
  const auto m = load_corpus(run.spec);
  const auto hist = run.spec.proveniences.empty() ? frequency_histogram(m)
                                                  : frequency_histogram(filter(m, run.spec.proveniences, run.spec.visualization));
  const auto report = frequency_bin_report(eval_report_from_json(read_json(eval_file)), hist,
                                           edges.empty() ? kDefaultFrequencyEdges : edges);
  json j = run.stamp(to_json(report));
  j["histogram"] = to_json(hist, run.spec.min_instances);
  j["eval"] = eval_file;
  write_json(run.out("reports/freq.json"), j);
  plot::write_svg(run.out("plots/freq.svg"), plot::frequency_chart(report));
  return 0;
}

int cmd_embed(const SpecFlags& flags, const std::string& checkpoint, const std::string& subset) {
  if (checkpoint.empty()) throw std::invalid_argument("embed needs a trained model (--checkpoint PATH)");
  auto spec = resolve(flags);
  const Model model = load_checkpoint(checkpoint);
  if (!flags.given("viz") && !flags.given("spec") && model.info().visualization) spec.visualization = *model.info().visualization;
  Run run{spec, {}};
  run.spec.validate();
  run.hash = spec_hash(run.spec);
  const auto m = load_corpus(run.spec);
  ImageCache cache;
  ManifestView view;
  if (subset == "all") {
    view = filter(m, run.spec.proveniences, run.spec.visualization);
  } else {
    const auto split = split_for(run, m, "");
    view = select_ids(m, subset == "train" ? split.train_ids : split.test_ids);
  }
  const auto e = embed_dataset(model, view, run.spec.visualization, cache, subset);
  write_embedding_csv(run.out("reports/embedding.csv"), e, "spec_hash=" + run.hash + " subset=" + subset);
  write_json(run.out("reports/embedding.json"),
             run.stamp({{"rows", e.size()}, {"dim", e.features.cols()}, {"subset", subset}, {"checkpoint", checkpoint}}));
  std::cout << e.size() << " x " << e.features.cols() << " features -> " << run.out("reports/embedding.csv").string() << "\n";
  return 0;
}

int cmd_project(const std::string& embedding, const std::string& out_dir, double perplexity, std::uint64_t seed) {
  const auto e = read_embedding_csv(embedding);
  TsneOptions opt;
  opt.perplexity = perplexity;
  opt.seed = seed;
  const auto p = project_2d(e, opt);
  const fs::path out(out_dir);
  const std::string comment = "method=" + p.method + " perplexity=" + std::to_string(perplexity) + " seed=" + std::to_string(seed);
  write_projection_csv(out / "reports/projection.csv", e, p, comment);
  write_json(out / "reports/projection.json", {{"method", p.method},
                                               {"perplexity", p.perplexity},
                                               {"seed", p.seed},
                                               {"rows", e.size()},
                                               {"source", embedding}});
  return 0;
}

int cmd_neighbors(const std::string& embedding, const std::string& id, int k) {
  const auto e = read_embedding_csv(embedding);
  json out = json::array();
  for (const auto& n : nearest_neighbors(e, id, k)) out.push_back({{"id", n.id}, {"similarity", n.similarity}});
  std::cout << json{{"query", id}, {"neighbors", out}}.dump(2) << "\n";
  return 0;
}

int cmd_plot(const std::string& projection, const std::string& color_by, const std::string& output) {
  if (color_by != "class" && color_by != "provenience") throw std::invalid_argument("--color-by must be class or provenience");
  const auto pts = plot::read_projection_csv(projection);
  plot::write_svg(output, plot::scatter(pts, color_by == "class" ? plot::ColorBy::Class : plot::ColorBy::Provenience));
  log("wrote " + output);
  return 0;
}

int cmd_serve(const SpecFlags& flags, const std::string& checkpoint, const std::string& host, int port, int workers) {
  const auto spec = resolve(flags);
  if (spec.corpus.empty()) throw std::invalid_argument("serve needs --corpus");
  auto m = load_corpus(spec);
  std::optional<service::ServedModel> served;
  if (!checkpoint.empty()) {
    auto model = std::make_shared<const Model>(load_checkpoint(checkpoint, &m.vocabulary));
    served = service::served_model(std::move(model));
  } else {
    log("no checkpoint given; /classify and /model will answer 503");
  }
  const service::Service svc(std::move(m), std::move(served));
  service::HttpServer server(svc, workers);
  log("listening on http://" + host + ":" + std::to_string(port));
  server.run(host, port);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Cuneiform sign classification toolkit"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<SpecFlags>> all_flags;
  auto sub = [&](const char* name, const char* desc) {
    auto* s = app.add_subcommand(name, desc);
    all_flags.push_back(std::make_unique<SpecFlags>());
    add_spec_flags(s, *all_flags.back());
    return std::pair<CLI::App*, SpecFlags*>{s, all_flags.back().get()};
  };

  bool check_dimensions = false;
  auto [validate, validate_f] = sub("validate", "Check a corpus manifest and print a summary");
  validate->add_flag("--check-dimensions", check_dimensions, "Decode images and compare their sizes");

  auto [split, split_f] = sub("split", "Write the seeded train/test split");
  auto [train_cmd, train_f] = sub("train", "Train (and optionally fine-tune) a classifier");

  std::string checkpoint, split_file, subset = "test", name = "eval";
  auto [ft, ft_f] = sub("fine-tune", "Fine-tune a checkpoint without augmentation");
  ft->add_option("--checkpoint", checkpoint)->required();

  auto [eval, eval_f] = sub("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint);
  eval->add_option("--split", split_file, "Split file (default OUT/split.json)");
  eval->add_option("--subset", subset)->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--name", name, "Report name under OUT/reports/");

  auto [experiment, experiment_f] = sub("experiment", "Repeated train/evaluate runs with mean and std");

  std::vector<std::string> viz_list;
  auto [sweep, sweep_f] = sub("viz-sweep", "Train and evaluate once per visualization");
  sweep->add_option("--vizs", viz_list, "Visualization tags (default: all)");

  std::string baseline, compared;
  int grid = 3;
  auto [gridc, grid_f] = sub("grid-report", "Per-region accuracy change between two evaluations");
  gridc->add_option("--baseline", baseline);
  gridc->add_option("--compared", compared);
  gridc->add_option("--grid", grid);

  std::string eval_file;
  std::vector<int> edges;
  auto [freq, freq_f] = sub("freq-report", "Accuracy by class frequency");
  freq->add_option("--eval", eval_file);
  freq->add_option("--edges", edges);

  std::vector<std::string> held_out, combos;
  auto [transfer, transfer_f] = sub("transfer", "Provenience transfer matrix");
  transfer->add_option("--held-out", held_out);
  transfer->add_option("--combo", combos, "Training set as P1+P2 (repeatable)");

  auto [embed, embed_f] = sub("embed", "Export penultimate-layer features");
  embed->add_option("--checkpoint", checkpoint);
  embed->add_option("--subset", subset)->check(CLI::IsMember({"test", "train", "all"}));

  std::string embedding = "out/reports/embedding.csv", out_dir = "out";
  double perplexity = 30;
  std::uint64_t tsne_seed = 0;
  auto* project = app.add_subcommand("project", "t-SNE projection of an embedding CSV");
  project->add_option("--embedding", embedding);
  project->add_option("--out", out_dir);
  project->add_option("--perplexity", perplexity);
  project->add_option("--seed", tsne_seed);

  std::string query;
  int k = 5;
  auto* neighbors = app.add_subcommand("neighbors", "Nearest neighbours of one sign by cosine similarity");
  neighbors->add_option("--embedding", embedding);
  neighbors->add_option("--id", query)->required();
  neighbors->add_option("-k", k);

  std::string projection = "out/reports/projection.csv", color_by = "class", output = "out/plots/projection.svg";
  auto* plotc = app.add_subcommand("plot", "Scatter plot of a projection CSV");
  plotc->add_option("--projection", projection);
  plotc->add_option("--color-by", color_by);
  plotc->add_option("--output", output);

  std::string host = "127.0.0.1";
  int port = 8080, workers = 4;
  auto [serve, serve_f] = sub("serve", "HTTP inference and corpus service");
  serve->add_option("--checkpoint", checkpoint);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--workers", workers);

  std::string fixture = "glyph", fixture_out;
  auto* make_fixture = app.add_subcommand("make-fixture", "Render a synthetic corpus");
  make_fixture->add_option("--name", fixture)->check(CLI::IsMember({"glyph", "fine-tune", "transfer"}));
  make_fixture->add_option("--out", fixture_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(*validate_f, check_dimensions);
    if (*split) return cmd_split(*split_f);
    if (*train_cmd) return cmd_train(*train_f);
    if (*ft) return cmd_fine_tune(*ft_f, checkpoint);
    if (*eval) return cmd_eval(*eval_f, checkpoint, split_file, subset, name);
    if (*experiment) return cmd_experiment(*experiment_f);
    if (*sweep) return cmd_viz_sweep(*sweep_f, viz_list);
    if (*gridc) return cmd_grid_report(*grid_f, baseline, compared, grid);
    if (*freq) return cmd_freq_report(*freq_f, eval_file, edges);
    if (*transfer) return cmd_transfer(*transfer_f, held_out, combos);
    if (*embed) return cmd_embed(*embed_f, checkpoint, subset);
    if (*project) return cmd_project(embedding, out_dir, perplexity, tsne_seed);
    if (*neighbors) return cmd_neighbors(embedding, query, k);
    if (*plotc) return cmd_plot(projection, color_by, output);
    if (*serve) return cmd_serve(*serve_f, checkpoint, host, port, workers);
    if (*make_fixture) {
      synthetic::write_fixture(fixture_out, synthetic::fixture_by_name(fixture));
      std::cout << "wrote " << fixture << " fixture to " << fixture_out << "\n";
      return 0;
    }
  } catch (const RepeatFailure& e) {
    std::cerr << "error: " << e.what() << " (" << e.failed_repeat() << " repeats completed)\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace wedge::cli
