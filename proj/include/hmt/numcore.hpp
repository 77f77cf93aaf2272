#pragma once

// Small dense numerical core: layers, activations, pooling, losses, Adam,
// LeCun initialization and a finite-difference gradient checker. Everything
// is double precision and operates on caller-owned data.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hmt/rng.hpp"

namespace hmt {

using Vector = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  ConstSpan row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  MutSpan row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  ConstSpan values() const { return data_; }
  MutSpan values() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Fully connected layer y = W x + b.
struct DenseLayer {
  Matrix weight;  // d_out x d_in
  Vector bias;    // d_out

  DenseLayer() = default;
  DenseLayer(std::size_t d_out, std::size_t d_in) : weight(d_out, d_in), bias(d_out, 0.0) {}

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  void set_zero();
  bool operator==(const DenseLayer&) const = default;
};

Vector dense_forward(ConstSpan x, const DenseLayer& layer);

// Accumulates dL/dW += dy x^T and dL/db += dy into `grad` and returns dL/dx.
Vector dense_backward(ConstSpan x, ConstSpan dy, const DenseLayer& layer, DenseLayer& grad);

// Same as dense_backward without computing dL/dx.
void dense_accumulate(ConstSpan x, ConstSpan dy, DenseLayer& grad);

Vector relu(ConstSpan x);
// Gradient passes only where the forward input was strictly positive.
Vector relu_backward(ConstSpan x, ConstSpan dy);

Vector softmax(ConstSpan scores);
double log_sum_exp(ConstSpan scores);

struct LossWithGrad {
  double loss = 0.0;
  Vector grad;  // w.r.t. the raw scores
};

// -weights[label] * log softmax(scores)[label], evaluated through log-sum-exp.
// An empty `weights` span means unit weights.
LossWithGrad weighted_cross_entropy(ConstSpan scores, std::size_t label, ConstSpan weights = {});

struct MaxPoolResult {
  Vector pooled;
  std::vector<std::size_t> argmax;  // source frame per coordinate (lowest index on ties)
};

MaxPoolResult temporal_max_pool(std::span<const ConstSpan> frames);
std::vector<Vector> temporal_max_pool_backward(ConstSpan dpooled,
                                               std::span<const std::size_t> argmax,
                                               std::size_t frame_count);

Vector temporal_avg_pool(std::span<const ConstSpan> frames);
std::vector<Vector> temporal_avg_pool_backward(ConstSpan dpooled, std::size_t frame_count);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Vector> first_moment;   // one per parameter block
  std::vector<Vector> second_moment;  // one per parameter block
};

AdamState make_adam_state(std::span<const std::size_t> block_sizes, double lr = 1e-3);

// One bias-corrected Adam update over all parameter blocks.
void adam_step(std::span<const MutSpan> params, std::span<const ConstSpan> grads, AdamState& state);

// Uniform in [-sqrt(3/d_in), sqrt(3/d_in)], i.e. variance 1/d_in.
Matrix lecun_init(std::size_t d_out, std::size_t d_in, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using LossFn = std::function<double(ConstSpan params)>;

// Compares `analytic` against central differences of `loss` on `probe_count`
// coordinates drawn without replacement (all of them if fewer exist).
GradCheckResult grad_check(const LossFn& loss, ConstSpan params, ConstSpan analytic,
                           std::size_t probe_count, double epsilon, Rng& rng);

double relative_error(double analytic, double numeric);

bool all_finite(ConstSpan values);

}  // namespace hmt
