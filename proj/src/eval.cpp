#include "hmt/eval.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "hmt/error.hpp"

namespace hmt {

namespace {

void check_inputs(std::span<const ClassId> preds, std::span<const ClassId> labels, std::size_t classes) {
  if (preds.size() != labels.size()) {
    throw DataError("metrics: " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw DataError("metrics: no samples");
  if (classes == 0) throw DataError("metrics: class count must be positive");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || labels[i] >= classes)
      throw DataError("metrics: class id outside [0, " + std::to_string(classes) + ")");
  }
}

}  // namespace

ConfusionMatrix normalize_rows(const CountMatrix& counts) {
  ConfusionMatrix out;
  out.counts = counts;
  for (const auto& row : counts) {
    std::size_t total = 0;
    for (std::size_t v : row) total += v;
    std::vector<double> norm(row.size(), 0.0);
    if (total > 0) {
      for (std::size_t j = 0; j < row.size(); ++j)
        norm[j] = static_cast<double>(row[j]) / static_cast<double>(total);
    }
    out.normalized.push_back(std::move(norm));
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> preds, std::span<const ClassId> labels,
                                 std::size_t classes) {
  check_inputs(preds, labels, classes);
  CountMatrix counts(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++counts[labels[i]][preds[i]];
  return normalize_rows(counts);
}

MetricsReport compute_metrics(std::span<const ClassId> preds, std::span<const ClassId> labels,
                              std::size_t classes) {
  MetricsReport m;
  m.confusion = confusion_matrix(preds, labels, classes).counts;
  m.classes = classes;
  m.samples = preds.size();
  m.recall.assign(classes, 0.0);
  m.precision.assign(classes, 0.0);
  m.f1.assign(classes, 0.0);
  m.support.assign(classes, 0);

  std::size_t correct = 0;
  std::size_t supported = 0;
  double recall_sum = 0.0;
  double f1_sum = 0.0;
  double weighted_f1 = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted = 0;
    for (std::size_t r = 0; r < classes; ++r) predicted += m.confusion[r][c];
    for (std::size_t v : m.confusion[c]) m.support[c] += v;
    const std::size_t tp = m.confusion[c][c];
    correct += tp;
    if (m.support[c] > 0) m.recall[c] = static_cast<double>(tp) / static_cast<double>(m.support[c]);
    if (predicted > 0) m.precision[c] = static_cast<double>(tp) / static_cast<double>(predicted);
    const double pr = m.precision[c] + m.recall[c];
    if (pr > 0.0) m.f1[c] = 2.0 * m.precision[c] * m.recall[c] / pr;
    if (m.support[c] > 0) {
      ++supported;
      recall_sum += m.recall[c];
      f1_sum += m.f1[c];
      weighted_f1 += static_cast<double>(m.support[c]) * m.f1[c];
    }
  }
  const double n = static_cast<double>(m.samples);
  m.unbalanced_accuracy = static_cast<double>(correct) / n;
  m.balanced_accuracy = recall_sum / static_cast<double>(supported);
  m.balanced_f1 = f1_sum / static_cast<double>(supported);
  m.unbalanced_f1 = weighted_f1 / n;
  return m;
}

Vector mask_neutral(ConstSpan scores, const LabelSet& labels) {
  if (!labels.has_neutral()) throw DataError("mask_neutral: label set has no neutral class");
  if (scores.size() != labels.channel_count()) {
    throw ShapeError("mask_neutral: got " + std::to_string(scores.size()) + " scores, expected " +
                     std::to_string(labels.channel_count()));
  }
  return Vector(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(labels.emotion_count()));
}

namespace {

// Channel scores restricted to whole-body classes.
Vector whole_view(ConstSpan scores, const LabelSet& labels) {
  if (labels.has_neutral()) return mask_neutral(scores, labels);
  return Vector(scores.begin(), scores.end());
}

}  // namespace

ClassId sum_fusion(ConstSpan s_face, ConstSpan s_body, const LabelSet& labels) {
  if (s_face.size() != s_body.size() || s_face.size() != labels.channel_count())
    throw ShapeError("sum_fusion: score vectors do not match the label set");
  const Vector pf = whole_view(softmax(s_face), labels);
  const Vector pb = whole_view(softmax(s_body), labels);
  Vector total(pf.size());
  for (std::size_t i = 0; i < total.size(); ++i) total[i] = pf[i] + pb[i];
  return argmax(total);
}

std::string_view branch_name(Branch branch) {
  switch (branch) {
    case Branch::Body: return "body";
    case Branch::Face: return "face";
    case Branch::Whole: return "whole";
    case Branch::Fusion: return "fusion";
    case Branch::SumFusion: return "sum_fusion";
  }
  return "?";
}

std::string_view label_kind_name(LabelKind kind) {
  switch (kind) {
    case LabelKind::Whole: return "y";
    case LabelKind::Face: return "y_face";
    case LabelKind::Body: return "y_body";
  }
  return "?";
}

std::string pairing_key(const Pairing& pairing) {
  return std::string(branch_name(pairing.branch)) + ":" + std::string(label_kind_name(pairing.labels));
}

std::vector<Pairing> report_pairings(Method method, const LabelSet& labels) {
  std::vector<Pairing> out;
  const bool channels = labels.has_neutral();
  if (method != Method::Joint1L) {
    out.push_back({Branch::Body, LabelKind::Whole});
    if (channels) out.push_back({Branch::Body, LabelKind::Body});
    out.push_back({Branch::Face, LabelKind::Whole});
    if (channels) out.push_back({Branch::Face, LabelKind::Face});
  }
  switch (method) {
    case Method::Sep: out.push_back({Branch::SumFusion, LabelKind::Whole}); break;
    case Method::Joint1L:
    case Method::Hmt3b: out.push_back({Branch::Whole, LabelKind::Whole}); break;
    case Method::Hmt3a:
    case Method::Hmt4: out.push_back({Branch::Fusion, LabelKind::Whole}); break;
  }
  return out;
}

const MetricsReport* EvalReport::find(const Pairing& pairing) const {
  for (const auto& p : pairings) {
    if (p.pairing == pairing) return &p.metrics;
  }
  return nullptr;
}

const MetricsReport& EvalReport::at(const Pairing& pairing) const {
  if (const auto* m = find(pairing)) return *m;
  throw ConfigError("evaluation report has no pairing " + pairing_key(pairing));
}

EvalReport evaluate_variant(const ModelParams& params, std::span<const SampleSequence> samples,
                            const Variant& variant, const LabelSet& labels, const EvalOptions& options) {
  if (samples.empty()) throw DataError("evaluate_variant: no test samples");
  if (params.dims.channel_classes != labels.channel_count() ||
      params.dims.whole_classes != labels.emotion_count())
    throw ShapeError("evaluate_variant: model dimensions do not match the label set");
  Variant eval_variant = variant;
  eval_variant.sep_branch = SepBranch::Both;

  EvalReport report;
  report.method = variant.method;
  report.samples = samples.size();
  const std::vector<Pairing> pairings = report_pairings(variant.method, labels);
  std::vector<std::vector<ClassId>> preds(pairings.size());
  std::vector<std::vector<ClassId>> truth(pairings.size());
  std::vector<std::size_t> face_absent(pairings.size(), 0);

  for (const SampleSequence& sample : samples) {
    const BranchOutputs out = hmt_forward(sample, params, eval_variant, options.keypoint_threshold);
    if (out.face_absent) ++report.face_absent;
    for (std::size_t p = 0; p < pairings.size(); ++p) {
      const Pairing& pairing = pairings[p];
      ClassId label = sample.label.whole;
      if (pairing.labels == LabelKind::Face) label = sample.label.face;
      if (pairing.labels == LabelKind::Body) label = sample.label.body;

      ClassId pred = 0;
      switch (pairing.branch) {
        case Branch::Face:
        case Branch::Body: {
          const bool face = pairing.branch == Branch::Face;
          const Vector& scores = face ? *out.s_face : *out.s_body;
          if (pairing.labels == LabelKind::Whole) {
            const ClassId channel = face ? sample.label.face : sample.label.body;
            if (options.skip_neutral_channel_for_y && labels.has_neutral() && channel == labels.neutral_id())
              continue;
            pred = argmax(whole_view(scores, labels));
          } else {
            pred = argmax(scores);
          }
          break;
        }
        case Branch::Whole: pred = predict(out, ScoreSource::Whole); break;
        case Branch::Fusion: pred = predict(out, ScoreSource::Fused); break;
        case Branch::SumFusion: pred = sum_fusion(*out.s_face, *out.s_body, labels); break;
      }
      preds[p].push_back(pred);
      truth[p].push_back(label);
      if (out.face_absent) ++face_absent[p];
    }
  }

  for (std::size_t p = 0; p < pairings.size(); ++p) {
    if (preds[p].empty()) continue;
    const std::size_t classes =
        pairings[p].labels == LabelKind::Whole ? labels.emotion_count() : labels.channel_count();
    PairingReport entry{pairings[p], compute_metrics(preds[p], truth[p], classes)};
    entry.metrics.face_absent = face_absent[p];
    report.pairings.push_back(std::move(entry));
  }
  return report;
}

const PairingSummary& CVSummary::at(const Pairing& pairing) const {
  for (const auto& p : pairings) {
    if (p.pairing == pairing) return p;
  }
  throw ConfigError("cross-validation summary has no pairing " + pairing_key(pairing));
}

RngSeed fold_plan_seed(RngSeed seed, std::size_t iteration) {
  return RngSeed{seed.value + iteration};
}

RngSeed fold_train_seed(RngSeed seed, std::size_t iteration, std::size_t fold) {
  return RngSeed{mix_seed(seed.value + iteration, 1000 + fold)};
}

std::vector<PairingSummary> summarize_runs(std::span<const CVRun> runs) {
  std::vector<PairingSummary> out;
  auto slot = [&](const Pairing& pairing, std::size_t classes) -> PairingSummary& {
    for (auto& s : out) {
      if (s.pairing == pairing) return s;
    }
    PairingSummary s;
    s.pairing = pairing;
    s.classes = classes;
    s.mean_recall.assign(classes, 0.0);
    s.pooled_confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    out.push_back(std::move(s));
    return out.back();
  };

  std::vector<std::vector<std::size_t>> recall_counts;
  for (const CVRun& run : runs) {
    for (const PairingReport& pr : run.report.pairings) {
      PairingSummary& s = slot(pr.pairing, pr.metrics.classes);
      const MetricsReport& m = pr.metrics;
      ++s.runs;
      s.mean.balanced_accuracy += m.balanced_accuracy;
      s.mean.unbalanced_accuracy += m.unbalanced_accuracy;
      s.mean.balanced_f1 += m.balanced_f1;
      s.mean.unbalanced_f1 += m.unbalanced_f1;
      for (std::size_t i = 0; i < m.classes; ++i) {
        for (std::size_t j = 0; j < m.classes; ++j) s.pooled_confusion[i][j] += m.confusion[i][j];
      }
    }
  }
  for (PairingSummary& s : out) {
    const double n = static_cast<double>(s.runs);
    s.mean.balanced_accuracy /= n;
    s.mean.unbalanced_accuracy /= n;
    s.mean.balanced_f1 /= n;
    s.mean.unbalanced_f1 /= n;
    std::vector<std::size_t> supported(s.classes, 0);
    for (const CVRun& run : runs) {
      const MetricsReport* m = run.report.find(s.pairing);
      if (!m) continue;
      for (std::size_t c = 0; c < s.classes; ++c) {
        if (m->support[c] == 0) continue;
        ++supported[c];
        s.mean_recall[c] += m->recall[c];
      }
    }
    for (std::size_t c = 0; c < s.classes; ++c) {
      if (supported[c] > 0) s.mean_recall[c] /= static_cast<double>(supported[c]);
    }
  }
  return out;
}

namespace {

std::vector<SampleSequence> select_subjects(const Dataset& dataset, std::span<const std::string> subjects) {
  std::vector<SampleSequence> out;
  for (const auto& s : dataset.samples) {
    if (std::binary_search(subjects.begin(), subjects.end(), s.subject)) out.push_back(s);
  }
  return out;
}

}  // namespace

CVSummary cross_validate(const Dataset& dataset, const TrainConfig& config, const CVOptions& options) {
  validate(config);
  if (options.iterations < 1) throw ConfigError("need at least 1 cross-validation iteration");

  struct Job {
    std::size_t iteration;
    std::size_t fold;
    std::vector<std::string> train_subjects;
    std::vector<std::string> test_subjects;
  };
  std::vector<Job> jobs;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const FoldPlan plan = make_folds(dataset, options.folds, fold_plan_seed(config.seed, it));
    for (std::size_t f = 0; f < plan.folds(); ++f) {
      jobs.push_back({it, f, plan.train_subjects(f), plan.test_subjects[f]});
    }
  }

  std::vector<CVRun> runs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    try {
      const auto train_set = select_subjects(dataset, job.train_subjects);
      const auto test_set = select_subjects(dataset, job.test_subjects);
      TrainConfig cfg = config;
      cfg.seed = fold_train_seed(config.seed, job.iteration, job.fold);
      EvalOptions eval = options.eval;
      eval.keypoint_threshold = config.keypoint_threshold;
      ModelParams params;
      if (config.variant.method == Method::Sep) {
        params = train_sep(train_set, dataset.labels, cfg, dataset.face_dim).merged();
      } else {
        params = train(train_set, dataset.labels, cfg, dataset.face_dim).params;
      }
      runs[j] = CVRun{job.iteration, job.fold, job.test_subjects,
                      evaluate_variant(params, test_set, config.variant, dataset.labels, eval)};
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      run_job(j);
      if (!errors[j] && options.on_run_done) options.on_run_done(runs[j]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
    for (auto& t : pool) t.join();
    if (options.on_run_done) {
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (!errors[j]) options.on_run_done(runs[j]);
      }
    }
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const std::exception& e) {
      throw Error("iteration " + std::to_string(jobs[j].iteration) + ", fold " +
                  std::to_string(jobs[j].fold) + ": " + e.what());
    }
  }

  CVSummary summary;
  summary.method = config.variant.method;
  summary.frame_level = config.variant.frame_level;
  summary.folds = options.folds;
  summary.iterations = options.iterations;
  summary.runs = std::move(runs);
  summary.pairings = summarize_runs(summary.runs);
  return summary;
}

}  // namespace hmt
