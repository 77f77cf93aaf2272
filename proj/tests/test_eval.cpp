#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "hmt/error.hpp"
#include "hmt/eval.hpp"
#include "hmt/synthetic.hpp"
#include "metric_oracle.hpp"

using namespace hmt;

namespace {

Dataset tiny_dataset(std::size_t subjects = 4) {
  SyntheticConfig config;
  config.subjects = subjects;
  config.face_dim = 6;
  config.frames = 2;
  return gen_synthetic(config, RngSeed{8});
}

TrainConfig tiny_config(Method m) {
  TrainConfig c;
  c.epochs = 2;
  c.lr_drop_epoch = 1;
  c.body_hidden = 4;
  c.variant.method = m;
  c.seed = RngSeed{4};
  return c;
}

bool has(const std::vector<Pairing>& ps, Branch b, LabelKind k) {
  for (const auto& p : ps)
    if (p.branch == b && p.labels == k) return true;
  return false;
}

}  // namespace

TEST_CASE("metrics hand cases") {
  const std::vector<ClassId> labels{0, 1, 2, 1};
  const MetricsReport perfect = compute_metrics(labels, labels, 3);
  CHECK(perfect.balanced_accuracy == 1.0);
  CHECK(perfect.unbalanced_accuracy == 1.0);
  CHECK(perfect.balanced_f1 == 1.0);
  CHECK(perfect.unbalanced_f1 == 1.0);

  const std::vector<ClassId> y{0, 0, 0, 1};
  const std::vector<ClassId> p{0, 0, 0, 0};
  const MetricsReport m = compute_metrics(p, y, 2);
  CHECK(m.unbalanced_accuracy == 0.75);
  CHECK(m.balanced_accuracy == 0.5);
  CHECK(m.recall == std::vector<double>{1.0, 0.0});

  // Class 2 has no support and is left out of balanced averages.
  const MetricsReport skip = compute_metrics(p, y, 3);
  CHECK(skip.balanced_accuracy == 0.5);
  CHECK_THROWS_AS(compute_metrics(std::vector<ClassId>{0}, std::vector<ClassId>{0, 1}, 2), Error);
}

TEST_CASE("metrics match the definitional oracle") {
  Rng rng(RngSeed{77});
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng.below(11);
    const std::size_t n = 1 + rng.below(80);
    std::vector<ClassId> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.below(classes);
      p[i] = rng.bernoulli(0.5) ? y[i] : rng.below(classes);
    }
    const MetricsReport got = compute_metrics(p, y, classes);
    const oracle::Metrics want = oracle::metrics(p, y, classes);
    CHECK(got.balanced_accuracy == want.balanced_accuracy);
    CHECK(got.unbalanced_accuracy == want.unbalanced_accuracy);
    CHECK(got.balanced_f1 == want.balanced_f1);
    CHECK(got.unbalanced_f1 == want.unbalanced_f1);
    CHECK(got.confusion == want.confusion);
  }
}

TEST_CASE("confusion matrices") {
  const std::vector<ClassId> y{0, 1, 2, 2, 1};
  const ConfusionMatrix perfect = confusion_matrix(y, y, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(perfect.normalized[i][j] == (i == j ? 1.0 : 0.0));
  const std::vector<ClassId> p{0, 2, 2, 1, 1};
  const ConfusionMatrix m = confusion_matrix(p, y, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    std::size_t col = 0, predicted = 0;
    for (std::size_t i = 0; i < 4; ++i) col += m.counts[i][j];
    for (ClassId c : p) predicted += c == j;
    CHECK(col == predicted);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    std::size_t row = 0, support = 0;
    for (std::size_t v : m.counts[i]) row += v;
    for (ClassId c : y) support += c == i;
    CHECK(row == support);
  }
  CHECK(m.normalized[3] == std::vector<double>(4, 0.0));
}

TEST_CASE("neutral masking") {
  const LabelSet bred = LabelSet::bred();
  const Vector scores{0.1, 0.9, 0.3, 0.2, 0.0, 0.4, 5.0};
  const Vector masked = mask_neutral(scores, bred);
  CHECK(masked.size() == 6);
  CHECK(argmax(masked) == 1);
  Rng rng(RngSeed{1});
  for (int i = 0; i < 100; ++i) {
    Vector s(7);
    for (double& v : s) v = rng.normal();
    s[6] = 1e9;
    CHECK(argmax(mask_neutral(s, bred)) < 6);
  }
}

TEST_CASE("sum fusion") {
  const LabelSet bred = LabelSet::bred();
  const Vector a{0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1.0};
  CHECK(sum_fusion(a, a, bred) == 1);
  const Vector uniform(7, 0.0);
  const Vector b{0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0};
  CHECK(sum_fusion(uniform, b, bred) == 3);
  CHECK(sum_fusion(b, uniform, bred) == 3);

  // Two-class hand case: face p = (0.6, 0.4), body p = (0.1, 0.9); sums 0.7 vs 1.3.
  const LabelSet two("two", {"a", "b"}, std::nullopt);
  const Vector face{std::log(0.6), std::log(0.4)};
  const Vector body{std::log(0.1), std::log(0.9)};
  CHECK(sum_fusion(face, body, two) == 1);
}

TEST_CASE("reported pairings") {
  const LabelSet bred = LabelSet::bred();
  const auto hmt4 = report_pairings(Method::Hmt4, bred);
  CHECK(hmt4.size() == 5);
  CHECK(has(hmt4, Branch::Body, LabelKind::Whole));
  CHECK(has(hmt4, Branch::Body, LabelKind::Body));
  CHECK(has(hmt4, Branch::Face, LabelKind::Whole));
  CHECK(has(hmt4, Branch::Face, LabelKind::Face));
  CHECK(has(hmt4, Branch::Fusion, LabelKind::Whole));
  const auto sep = report_pairings(Method::Sep, bred);
  CHECK(has(sep, Branch::SumFusion, LabelKind::Whole));
  CHECK_FALSE(has(sep, Branch::Fusion, LabelKind::Whole));
  const auto j = report_pairings(Method::Joint1L, bred);
  CHECK(j.size() == 1);
  CHECK(has(j, Branch::Whole, LabelKind::Whole));
  CHECK(has(report_pairings(Method::Hmt3b, bred), Branch::Whole, LabelKind::Whole));
  const LabelSet gemep("gemep", {"a", "b", "c"}, std::nullopt);
  const auto g = report_pairings(Method::Hmt4, gemep);
  CHECK(g.size() == 3);
  CHECK(pairing_key({Branch::Fusion, LabelKind::Whole}) == "fusion:y");
  CHECK(pairing_key({Branch::Body, LabelKind::Body}) == "body:y_body");
}

TEST_CASE("evaluation counts face-absent samples") {
  Dataset d = tiny_dataset(2);
  for (std::size_t i = 0; i < 3; ++i)
    for (auto& f : d.samples[i].face_frames) f.reset();
  const TrainConfig c = tiny_config(Method::Hmt4);
  Rng rng(RngSeed{1});
  const ModelParams p = ModelParams::init(dims_for(d.labels, d.face_dim, c.variant, 4), rng);
  const EvalReport r = evaluate_variant(p, d.samples, c.variant, d.labels, EvalOptions{});
  CHECK(r.samples == d.samples.size());
  CHECK(r.face_absent == 3);
  CHECK(r.pairings.size() == 5);
  CHECK(r.at({Branch::Body, LabelKind::Body}).classes == 7);
  CHECK(r.at({Branch::Face, LabelKind::Whole}).classes == 6);
  CHECK(r.find({Branch::Whole, LabelKind::Whole}) == nullptr);
}

TEST_CASE("cross-validation") {
  const Dataset d = tiny_dataset(4);
  const TrainConfig c = tiny_config(Method::Hmt4);
  CVOptions o;
  o.folds = 2;
  o.iterations = 1;
  const CVSummary s = cross_validate(d, c, o);
  REQUIRE(s.runs.size() == 2);
  std::set<std::string> tested;
  for (const auto& run : s.runs)
    for (const auto& subj : run.test_subjects) CHECK(tested.insert(subj).second);
  CHECK(tested.size() == 4);

  for (const auto& ps : s.pairings) {
    double sum = 0.0;
    for (const auto& run : s.runs) sum += run.report.at(ps.pairing).balanced_accuracy;
    CHECK(ps.mean.balanced_accuracy == doctest::Approx(sum / 2.0).epsilon(1e-15));
    CHECK(ps.runs == 2);
  }

  const CVSummary again = cross_validate(d, c, o);
  CHECK(again.runs.size() == s.runs.size());
  for (std::size_t i = 0; i < s.pairings.size(); ++i) {
    CHECK(again.pairings[i].mean.balanced_accuracy == s.pairings[i].mean.balanced_accuracy);
    CHECK(again.pairings[i].pooled_confusion == s.pairings[i].pooled_confusion);
  }

  CVOptions threaded = o;
  threaded.workers = 2;
  const CVSummary t = cross_validate(d, c, threaded);
  for (std::size_t i = 0; i < s.pairings.size(); ++i)
    CHECK(t.pairings[i].mean.unbalanced_f1 == s.pairings[i].mean.unbalanced_f1);

  CVOptions too_many = o;
  too_many.folds = 10;
  CHECK_THROWS_AS(cross_validate(d, c, too_many), ConfigError);
}

TEST_CASE("SEP cross-validation reports sum fusion") {
  const Dataset d = tiny_dataset(4);
  CVOptions o;
  o.folds = 2;
  o.iterations = 1;
  const CVSummary s = cross_validate(d, tiny_config(Method::Sep), o);
  bool found = false;
  for (const auto& p : s.pairings) found = found || p.pairing.branch == Branch::SumFusion;
  CHECK(found);
}
