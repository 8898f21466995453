#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "wedge/evaluator.hpp"

using namespace wedge;

namespace {

int oracle_rank(const Eigen::VectorXf& l, int c) {
  std::vector<int> order(std::size_t(l.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return l(a) > l(b); });
  return int(std::find(order.begin(), order.end(), c) - order.begin());
}

// Logit of class k is the first pixel's red value when k equals its label.
class PixelStub final : public Classifier {
 public:
  explicit PixelStub(int n) : n_(n) {}
  int n_classes() const override { return n_; }
  Eigen::MatrixXf predict_logits(std::span<const ImageF> prepared) const override {
    Eigen::MatrixXf out = Eigen::MatrixXf::Zero(Eigen::Index(prepared.size()), n_);
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const int c = int(std::lround(prepared[i].pixels(0, 0) * 10.0f));
      out(Eigen::Index(i), c) = 1.0f;
    }
    return out;
  }

 private:
  int n_;
};

ExampleResult example(const std::string& id, const std::string& cls, const std::string& prov, Point c, int rank) {
  ExampleResult e;
  e.id = id;
  e.sign_class = cls;
  e.provenience = prov;
  e.centroid = c;
  e.rank = rank;
  return e;
}

}  // namespace

TEST_CASE("rank follows a stable descending sort") {
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const int n = 1 + int(uniform_index(rng, 40));
    Eigen::VectorXf l(n);
    for (int i = 0; i < n; ++i) l(i) = float(uniform_index(rng, 5));  // heavy ties
    const int c = int(uniform_index(rng, std::uint64_t(n)));
    CHECK(true_class_rank(l, c) == oracle_rank(l, c));
  }
  Eigen::VectorXf tie(4);
  tie << 1, 1, 1, 1;
  CHECK(true_class_rank(tie, 0) == 0);
  CHECK(true_class_rank(tie, 3) == 3);
  CHECK(top_k_hits(tie, 3, 4));
  CHECK_FALSE(top_k_hits(tie, 3, 3));
}

TEST_CASE("repeat statistics") {
  const std::vector<double> one{0.5};
  CHECK(repeat_stats(one).mean == 0.5);
  CHECK_FALSE(repeat_stats(one).std.has_value());
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(repeat_stats(v).mean == 2.5);
  CHECK(*repeat_stats(v).std == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("accumulator groups and recomposes") {
  EvalAccumulator acc;
  acc.add(example("a", "X", "p", {0.1, 0.1}, 0));
  acc.add(example("b", "X", "q", {0.9, 0.1}, 2));
  acc.add(example("c", "Y", "q", {0.5, 0.5}, 7));
  acc.add(example("d", "Y", "q", {0.5, 0.5}, 0));
  const auto r = acc.finish();
  CHECK(r.support == 4);
  CHECK(r.top1 == 0.5);
  CHECK(r.top5 == 0.75);
  CHECK(r.per_class.at("X").top1 == 0.5);
  CHECK(r.per_class.at("Y").top5 == 0.5);
  CHECK(r.per_provenience.at("q").support == 3);
  CHECK(r.per_provenience.at("q").top1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("evaluate scores every sample with a classifier") {
  std::vector<CropSample> samples;
  for (int i = 0; i < 70; ++i) {
    CropSample s;
    s.pixels = ImageF(kCropSize, kCropSize);
    const int predicted = i % 3;
    // prepare_eval maps v to 2v - 1; choose v so the stub reads `predicted`
    s.pixels.pixels.setConstant((predicted / 10.0f + 1.0f) / 2.0f);
    s.label = i % 7 < 3 ? predicted : (predicted + 1) % 3;
    s.meta.annotation_id = "s" + std::to_string(i);
    s.meta.sign_class = "C" + std::to_string(s.label);
    s.meta.provenience = i < 35 ? "p" : "q";
    samples.push_back(s);
  }
  const PixelStub stub(3);
  const auto r = evaluate(stub, samples, {}, 16);
  int hits = 0;
  for (int i = 0; i < 70; ++i) hits += i % 7 < 3;
  CHECK(r.support == 70);
  CHECK(r.top1 == doctest::Approx(double(hits) / 70));
  CHECK(r.top5 == 1.0);
  CHECK(r.examples.size() == 70);
  CHECK_THROWS_AS(evaluate(stub, std::span<const CropSample>{}), Error);
}

TEST_CASE("evaluate_logits") {
  Eigen::MatrixXf logits(2, 3);
  logits << 0, 1, 2, 5, 1, 1;
  std::vector<SampleMeta> meta(2);
  meta[0].annotation_id = "a";
  meta[1].annotation_id = "b";
  const std::vector<int> labels{2, 1};
  const auto r = evaluate_logits(logits, meta, labels);
  CHECK(r.top1 == 0.5);
  CHECK(r.examples[1].rank == 1);
}

TEST_CASE("repeats aggregate and report partial results") {
  std::vector<std::uint64_t> seeds;
  auto run = [&](int i, std::uint64_t seed) {
    seeds.push_back(seed);
    EvalAccumulator acc;
    acc.add(example("a", "X", "p", {0, 0}, i));
    acc.add(example("b", "X", "p", {0, 0}, 0));
    return acc.finish();
  };
  const auto r = run_repeats(run, 3, 10);
  CHECK(seeds == std::vector<std::uint64_t>{10, 11, 12});
  CHECK(r.repeats.size() == 3);
  CHECK(r.top1 == doctest::Approx((1.0 + 0.5 + 0.5) / 3));
  CHECK(r.top1_stats->std.has_value());
  CHECK(r.per_class.at("X").top1 == doctest::Approx(r.top1));

  auto failing = [&](int i, std::uint64_t s) -> EvalReport {
    if (i == 2) throw Error("boom");
    return run(i, s);
  };
  try {
    run_repeats(failing, 4, 0);
    FAIL("expected RepeatFailure");
  } catch (const RepeatFailure& e) {
    CHECK(e.failed_repeat() == 2);
    CHECK(e.partial().repeats.size() == 2);
  }
  CHECK_THROWS_AS(run_repeats(run, 0, 0), Error);
}

TEST_CASE("transfer rows") {
  std::map<std::string, Accuracy> by_test{{"a", {10, 0.8, 0.9}}, {"b", {10, 0.6, 0.9}}, {"c", {10, 0.35, 0.5}}};
  const auto row = make_transfer_row({"a", "b"}, by_test);
  CHECK(*row.mean_in_distribution == doctest::Approx(0.7));
  CHECK(row.cell("a")->in_distribution);
  CHECK_FALSE(row.cell("a")->ood_ratio.has_value());
  CHECK(*row.cell("c")->ood_ratio == doctest::Approx(0.5));
  CHECK(row.cell("zzz") == nullptr);
}

TEST_CASE("frequency bins") {
  EvalReport r;
  r.per_class = {{"rare", {2, 0.0, 0.5}}, {"mid", {4, 0.5, 1.0}}, {"mid2", {4, 1.0, 1.0}}, {"common", {30, 0.9, 1.0}}};
  FrequencyHistogram h;
  h.counts = {{"rare", 20}, {"mid", 40}, {"mid2", 99}, {"common", 300}};
  const auto rep = frequency_bin_report(r, h);
  REQUIRE(rep.bins.size() == 4);
  CHECK(rep.bins[0].classes.size() == 1);
  CHECK(rep.bins[1].classes.size() == 2);
  CHECK(*rep.bins[1].mean_top1 == doctest::Approx(0.75));
  CHECK_FALSE(rep.bins[2].mean_top1.has_value());
  CHECK(rep.bins[3].label() == "[250, inf)");
  CHECK(rep.bins[0].label() == "[20, 40)");

  h.counts["rare"] = 5;
  CHECK_THROWS_AS(frequency_bin_report(r, h), Error);
  h.counts.erase("rare");
  CHECK_THROWS_AS(frequency_bin_report(r, h), Error);
  CHECK_THROWS_AS(frequency_bin_report(r, h, {20, 20, 40}), Error);
}

TEST_CASE("grid report") {
  EvalAccumulator base, cmp;
  base.add(example("a", "X", "p", {0.1, 0.1}, 0));
  base.add(example("b", "X", "p", {0.9, 0.9}, 3));
  base.add(example("c", "X", "p", {0.95, 0.9}, 3));
  cmp.add(example("a", "X", "p", {0.1, 0.1}, 1));
  cmp.add(example("b", "X", "p", {0.9, 0.9}, 0));
  cmp.add(example("c", "X", "p", {0.95, 0.9}, 3));
  const std::map<std::string, Eigen::Vector3d> normals{{"b", {1, 0, 0}}, {"c", {0, 0, 1}}};
  const auto g = grid_report(cmp.finish(), base.finish(), GridSize::ThreeByThree, &normals);
  CHECK(g.support == 3);
  CHECK(g.cells[0].delta_pp == doctest::Approx(-100));
  CHECK(g.cells[8].support == 2);
  CHECK(g.cells[8].delta_pp == doctest::Approx(50));
  REQUIRE(g.cells[8].normal.has_value());
  CHECK(g.cells[8].normal->nx == doctest::Approx(std::sqrt(0.5)));
  CHECK_FALSE(g.cells[0].normal.has_value());
  CHECK(g.cells[4].support == 0);

  EvalAccumulator other;
  other.add(example("z", "X", "p", {0.5, 0.5}, 0));
  other.add(example("a", "X", "p", {0.5, 0.5}, 0));
  other.add(example("b", "X", "p", {0.5, 0.5}, 0));
  CHECK_THROWS_AS(grid_report(other.finish(), base.finish(), GridSize::ThreeByThree), Error);
}
