#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hmt/data.hpp"
#include "hmt/model.hpp"
#include "hmt/rng.hpp"

namespace hmt {

// Finite-difference check of the full network loss at reduced dimensions.
struct ModelGradCheckConfig {
  Variant variant;
  std::size_t face_dim = 16;
  std::size_t body_hidden = 8;
  std::size_t frames = 3;
  std::size_t classes = 4;  // whole-body emotions; channel labels add neutral
  std::size_t samples = 3;
  std::size_t probes = 50;  // per parameter block
  double epsilon = 1e-6;
  double threshold = 0.1;
  RngSeed seed{7};
  bool corrupt = false;  // doubles the analytic gradient (self-test of the checker)
};

struct BlockCheck {
  std::string name;
  std::size_t size = 0;
  bool used = false;  // any analytic gradient entry is non-zero
  GradCheckResult result;
};

struct ModelGradCheckReport {
  std::vector<BlockCheck> blocks;
  double max_rel_error() const;
};

// Random samples on a label set with `classes` emotions plus neutral.
std::vector<SampleSequence> random_samples(const LabelSet& labels, std::size_t count, std::size_t frames,
                                           std::size_t face_dim, Rng& rng);

// Mean loss over `samples` and its analytic gradient.
double batch_loss(std::span<const SampleSequence> samples, const ModelParams& params, const Variant& variant,
                  ConstSpan body_weights, double threshold, ModelParams* grads);

ModelGradCheckReport check_model_gradients(const ModelGradCheckConfig& config);

}  // namespace hmt
