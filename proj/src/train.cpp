#include "hmt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "hmt/error.hpp"

namespace hmt {

void validate(const TrainConfig& config) {
  if (config.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (config.lr_drop_epoch < 1 || config.lr_drop_epoch > config.epochs)
    throw ConfigError("lr_drop_epoch must lie in [1, epochs]");
  if (!(config.lr_drop_factor > 1.0)) throw ConfigError("lr_drop_factor must exceed 1");
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (config.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(config.keypoint_threshold >= 0.0 && config.keypoint_threshold <= 1.0))
    throw ConfigError("keypoint threshold must lie in [0, 1]");
  if (config.body_hidden < 1) throw ConfigError("body hidden size must be positive");
  if (config.variant.two_vector_fusion && config.variant.method != Method::Hmt3a)
    throw ConfigError("two-vector fusion applies to HMT-3a only");
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  return epoch < config.lr_drop_epoch ? config.lr : config.lr / config.lr_drop_factor;
}

std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,lr";
  for (LossTerm t : kLossTerms) out << ',' << loss_term_name(t);
  out << ",total\n";
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << ',' << r.lr;
    for (LossTerm t : kLossTerms) {
      out << ',';
      if (auto v = r.loss.get(t)) out << *v;
    }
    out << ',' << r.loss.total << '\n';
  }
  return out.str();
}

Vector compute_class_weights(std::span<const ClassId> labels, std::size_t classes) {
  if (labels.empty()) throw DataError("compute_class_weights: empty label list");
  std::vector<std::size_t> counts(classes, 0);
  for (ClassId c : labels) {
    if (c >= classes) throw DataError("compute_class_weights: label outside [0, classes)");
    ++counts[c];
  }
  const double total = static_cast<double>(labels.size());
  Vector weights(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] > 0) weights[c] = total / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return weights;
}

std::vector<std::string> FoldPlan::train_subjects(std::size_t fold) const {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < test_subjects.size(); ++f) {
    if (f == fold) continue;
    out.insert(out.end(), test_subjects[f].begin(), test_subjects[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan make_folds(std::span<const std::string> subjects, std::size_t k, RngSeed seed) {
  std::set<std::string> unique(subjects.begin(), subjects.end());
  if (k < 2) throw ConfigError("need at least 2 folds");
  if (unique.size() < k) {
    throw ConfigError("cannot build " + std::to_string(k) + " subject-disjoint folds from " +
                      std::to_string(unique.size()) + " subjects");
  }
  std::vector<std::string> order(unique.begin(), unique.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));
  FoldPlan plan;
  plan.test_subjects.resize(k);
  for (std::size_t i = 0; i < order.size(); ++i) plan.test_subjects[i % k].push_back(order[i]);
  for (auto& fold : plan.test_subjects) std::sort(fold.begin(), fold.end());
  return plan;
}

FoldPlan make_folds(const Dataset& dataset, std::size_t k, RngSeed seed) {
  const auto subjects = dataset.subjects();
  return make_folds(std::span<const std::string>(subjects), k, seed);
}

std::size_t face_dim_of(std::span<const SampleSequence> samples, std::size_t fallback) {
  for (const auto& s : samples) {
    for (const auto& f : s.face_frames) {
      if (f) return f->size();
    }
  }
  return fallback;
}

namespace {

std::vector<MutSpan> mutable_blocks(ModelParams& p) {
  std::vector<MutSpan> out;
  for (const auto& b : p.blocks()) out.push_back(b.values);
  return out;
}

std::vector<ConstSpan> const_blocks(const ModelParams& p) {
  std::vector<ConstSpan> out;
  for (const auto& b : p.blocks()) out.push_back(b.values);
  return out;
}

void scale(ModelParams& p, double factor) {
  for (auto& b : p.blocks()) {
    for (double& v : b.values) v *= factor;
  }
}

}  // namespace

TrainResult train(std::span<const SampleSequence> samples, const LabelSet& labels,
                  const TrainConfig& config, std::size_t face_dim) {
  validate(config);
  if (samples.empty()) throw ConfigError("training set is empty");
  const Variant& variant = config.variant;
  const ModelDims dims = dims_for(labels, face_dim_of(samples, face_dim), variant, config.body_hidden);

  TrainResult result;
  Rng init_rng(RngSeed{mix_seed(config.seed.value, 0)});
  Rng order_rng(RngSeed{mix_seed(config.seed.value, 1)});
  result.params = ModelParams::init(dims, init_rng);

  std::vector<ClassId> body_labels;
  for (const auto& s : samples) body_labels.push_back(s.label.body);
  result.body_class_weights = compute_class_weights(body_labels, dims.channel_classes);

  std::vector<std::size_t> block_sizes;
  for (const auto& b : result.params.blocks()) block_sizes.push_back(b.values.size());
  AdamState adam = make_adam_state(block_sizes, config.lr);
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.epsilon = config.adam_epsilon;

  ModelParams grads = ModelParams::zeros(dims);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    adam.lr = learning_rate_at(config, epoch);
    order_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord record;
    record.epoch = epoch;
    record.lr = adam.lr;
    std::array<double, 4> sums{};
    double total_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grads.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const SampleSequence& sample = samples[order[i]];
        const ForwardTrace trace = hmt_forward_trace(sample, result.params, variant, config.keypoint_threshold);
        const LossResult loss = hmt_loss_with_grad(trace.outputs, sample.label, variant, result.body_class_weights);
        if (!std::isfinite(loss.breakdown.total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / config.batch_size) + ", sample '" + sample.id + "'");
        }
        for (std::size_t t = 0; t < 4; ++t) {
          if (loss.breakdown.components[t]) sums[t] += *loss.breakdown.components[t];
        }
        total_sum += loss.breakdown.total;
        hmt_backward(trace, loss.grads, result.params, grads);
      }
      scale(grads, 1.0 / static_cast<double>(end - start));
      const auto params_view = mutable_blocks(result.params);
      const auto grads_view = const_blocks(grads);
      adam_step(params_view, grads_view, adam);
    }

    const double n = static_cast<double>(samples.size());
    for (LossTerm t : supervised_terms(variant)) {
      record.loss.components[static_cast<std::size_t>(t)] = sums[static_cast<std::size_t>(t)] / n;
    }
    record.loss.total = total_sum / n;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.epochs.push_back(record);
  }
  if (!result.params.all_finite()) throw NumericError("training produced non-finite parameters");
  return result;
}

RngSeed sep_seed(RngSeed seed, SepBranch branch) {
  return RngSeed{mix_seed(seed.value, branch == SepBranch::Body ? 101 : 100)};
}

ModelParams SepTrainResult::merged() const {
  ModelParams out = face.params;
  out.body_hidden = body.params.body_hidden;
  out.body_fc = body.params.body_fc;
  return out;
}

SepTrainResult train_sep(std::span<const SampleSequence> samples, const LabelSet& labels,
                         const TrainConfig& config, std::size_t face_dim) {
  if (config.variant.method != Method::Sep) throw ConfigError("train_sep requires the SEP method");
  SepTrainResult out;
  TrainConfig face_cfg = config;
  face_cfg.variant.sep_branch = SepBranch::Face;
  face_cfg.seed = sep_seed(config.seed, SepBranch::Face);
  out.face = train(samples, labels, face_cfg, face_dim);
  TrainConfig body_cfg = config;
  body_cfg.variant.sep_branch = SepBranch::Body;
  body_cfg.seed = sep_seed(config.seed, SepBranch::Body);
  out.body = train(samples, labels, body_cfg, face_dim);
  return out;
}

}  // namespace hmt
