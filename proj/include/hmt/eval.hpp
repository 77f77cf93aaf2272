#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hmt/data.hpp"
#include "hmt/model.hpp"
#include "hmt/train.hpp"

namespace hmt {

using CountMatrix = std::vector<std::vector<std::size_t>>;

struct MetricsReport {
  std::size_t classes = 0;
  std::size_t samples = 0;
  std::size_t face_absent = 0;
  double balanced_accuracy = 0.0;    // mean recall over classes with support
  double unbalanced_accuracy = 0.0;  // fraction correct
  double balanced_f1 = 0.0;          // mean F1 over classes with support
  double unbalanced_f1 = 0.0;        // support-weighted F1
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  CountMatrix confusion;  // [true][predicted]
};

MetricsReport compute_metrics(std::span<const ClassId> preds, std::span<const ClassId> labels,
                              std::size_t classes);

struct ConfusionMatrix {
  CountMatrix counts;
  std::vector<std::vector<double>> normalized;  // rows sum to 1, zero-support rows stay 0
};

ConfusionMatrix confusion_matrix(std::span<const ClassId> preds, std::span<const ClassId> labels,
                                 std::size_t classes);
ConfusionMatrix normalize_rows(const CountMatrix& counts);

// Drops the neutral score so channel scores line up with whole-body classes.
Vector mask_neutral(ConstSpan scores, const LabelSet& labels);

// Softmax of each branch, neutral masked when present, probabilities summed, argmax.
ClassId sum_fusion(ConstSpan s_face, ConstSpan s_body, const LabelSet& labels);

enum class Branch { Body, Face, Whole, Fusion, SumFusion };
enum class LabelKind { Whole, Face, Body };  // y, y_face, y_body

std::string_view branch_name(Branch branch);
std::string_view label_kind_name(LabelKind kind);

struct Pairing {
  Branch branch = Branch::Fusion;
  LabelKind labels = LabelKind::Whole;
  bool operator==(const Pairing&) const = default;
};

std::string pairing_key(const Pairing& pairing);  // e.g. "fusion:y", "body:y_body"

// Branch/label pairings reported for a method (whole-body label-set layout).
std::vector<Pairing> report_pairings(Method method, const LabelSet& labels);

struct EvalOptions {
  double keypoint_threshold = 0.1;
  // Score channel branches against y only on samples whose channel label is not neutral.
  bool skip_neutral_channel_for_y = false;
};

struct PairingReport {
  Pairing pairing;
  MetricsReport metrics;
};

struct EvalReport {
  Method method = Method::Hmt4;
  std::size_t samples = 0;
  std::size_t face_absent = 0;
  std::vector<PairingReport> pairings;

  const MetricsReport& at(const Pairing& pairing) const;
  const MetricsReport* find(const Pairing& pairing) const;
};

EvalReport evaluate_variant(const ModelParams& params, std::span<const SampleSequence> samples,
                            const Variant& variant, const LabelSet& labels, const EvalOptions& options);

struct CVRun {
  std::size_t iteration = 0;
  std::size_t fold = 0;
  std::vector<std::string> test_subjects;
  EvalReport report;
};

struct MetricMeans {
  double balanced_accuracy = 0.0;
  double unbalanced_accuracy = 0.0;
  double balanced_f1 = 0.0;
  double unbalanced_f1 = 0.0;
};

struct PairingSummary {
  Pairing pairing;
  std::size_t classes = 0;
  std::size_t runs = 0;
  MetricMeans mean;
  std::vector<double> mean_recall;  // per class, over runs where the class had support
  CountMatrix pooled_confusion;     // summed over runs
};

struct CVSummary {
  Method method = Method::Hmt4;
  bool frame_level = false;
  std::size_t folds = 0;
  std::size_t iterations = 0;
  std::vector<CVRun> runs;  // ordered by (iteration, fold)
  std::vector<PairingSummary> pairings;

  const PairingSummary& at(const Pairing& pairing) const;
};

struct CVOptions {
  std::size_t folds = 10;
  std::size_t iterations = 10;
  std::size_t workers = 1;
  EvalOptions eval;
  std::function<void(const CVRun&)> on_run_done;  // called from the merging thread
};

// Seeds: iteration i shuffles folds with seed + i; fold f of iteration i trains
// with mix_seed(seed + i, 1000 + f).
RngSeed fold_plan_seed(RngSeed seed, std::size_t iteration);
RngSeed fold_train_seed(RngSeed seed, std::size_t iteration, std::size_t fold);

CVSummary cross_validate(const Dataset& dataset, const TrainConfig& config, const CVOptions& options);

// Means and pooled confusions recomputed from runs (used by cross_validate).
std::vector<PairingSummary> summarize_runs(std::span<const CVRun> runs);

}  // namespace hmt
