#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hmt/data.hpp"
#include "hmt/model.hpp"
#include "hmt/rng.hpp"

namespace hmt {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t lr_drop_epoch = 150;  // 0-based epoch from which lr / factor applies
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 16;
  Variant variant;
  double keypoint_threshold = 0.1;
  RngSeed seed{1};
  std::size_t body_hidden = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

void validate(const TrainConfig& config);

// Learning rate used during 0-based `epoch`.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;  // mean over the epoch's samples
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// CSV with header epoch,lr,L_f,L_b,L_w,L_d,total; unsupervised terms are empty.
std::string history_to_csv(const TrainHistory& history);

// w_c = N / (C * N_c) for classes present, 0 for absent classes.
Vector compute_class_weights(std::span<const ClassId> labels, std::size_t classes);

struct FoldPlan {
  std::vector<std::vector<std::string>> test_subjects;  // one entry per fold

  std::size_t folds() const { return test_subjects.size(); }
  // Subjects of every other fold.
  std::vector<std::string> train_subjects(std::size_t fold) const;
};

// Subjects are sorted, shuffled by `seed`, then dealt round-robin into k folds.
FoldPlan make_folds(std::span<const std::string> subjects, std::size_t k, RngSeed seed);
FoldPlan make_folds(const Dataset& dataset, std::size_t k, RngSeed seed);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  Vector body_class_weights;
};

// Trains one model on `samples`. The face feature size is taken from the data
// (`face_dim` is used when no sample carries a face frame).
TrainResult train(std::span<const SampleSequence> samples, const LabelSet& labels,
                  const TrainConfig& config, std::size_t face_dim);

struct SepTrainResult {
  TrainResult face;
  TrainResult body;
  // Face layers from the face run, body layers from the body run.
  ModelParams merged() const;
};

// Independent face-only and body-only runs with seeds derived from config.seed.
SepTrainResult train_sep(std::span<const SampleSequence> samples, const LabelSet& labels,
                         const TrainConfig& config, std::size_t face_dim);

// Seed used for the face (stream 0) or body (stream 1) run of train_sep.
RngSeed sep_seed(RngSeed seed, SepBranch branch);

// Largest face feature size present in the samples, or `fallback`.
std::size_t face_dim_of(std::span<const SampleSequence> samples, std::size_t fallback);

}  // namespace hmt
