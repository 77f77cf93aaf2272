#include "hmt/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmt/error.hpp"

namespace hmt {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const char* what, std::size_t expected,
                                 std::size_t actual) {
  std::ostringstream msg;
  msg << op << ": " << what << " has " << actual << " entries, expected " << expected;
  throw ShapeError(msg.str());
}

void check_frames(const char* op, std::span<const ConstSpan> frames) {
  if (frames.empty()) throw ShapeError(std::string(op) + ": empty frame list");
  const std::size_t dim = frames.front().size();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].size() != dim) shape_mismatch(op, "frame", dim, frames[i].size());
  }
}

}  // namespace

void DenseLayer::set_zero() {
  std::fill(weight.values().begin(), weight.values().end(), 0.0);
  std::fill(bias.begin(), bias.end(), 0.0);
}

Vector dense_forward(ConstSpan x, const DenseLayer& layer) {
  if (x.size() != layer.in_dim()) shape_mismatch("dense_forward", "input", layer.in_dim(), x.size());
  Vector y(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const ConstSpan w = layer.weight.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * x[c];
    y[r] = acc + layer.bias[r];
  }
  return y;
}

void dense_accumulate(ConstSpan x, ConstSpan dy, DenseLayer& grad) {
  if (x.size() != grad.in_dim()) shape_mismatch("dense_backward", "input", grad.in_dim(), x.size());
  if (dy.size() != grad.out_dim())
    shape_mismatch("dense_backward", "output gradient", grad.out_dim(), dy.size());
  for (std::size_t r = 0; r < dy.size(); ++r) {
    const double g = dy[r];
    grad.bias[r] += g;
    if (g == 0.0) continue;
    MutSpan w = grad.weight.row(r);
    for (std::size_t c = 0; c < w.size(); ++c) w[c] += g * x[c];
  }
}

Vector dense_backward(ConstSpan x, ConstSpan dy, const DenseLayer& layer, DenseLayer& grad) {
  if (grad.in_dim() != layer.in_dim() || grad.out_dim() != layer.out_dim())
    throw ShapeError("dense_backward: gradient buffer shape differs from layer shape");
  dense_accumulate(x, dy, grad);
  Vector dx(layer.in_dim(), 0.0);
  for (std::size_t r = 0; r < dy.size(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const ConstSpan w = layer.weight.row(r);
    for (std::size_t c = 0; c < dx.size(); ++c) dx[c] += g * w[c];
  }
  return dx;
}

Vector relu(ConstSpan x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Vector relu_backward(ConstSpan x, ConstSpan dy) {
  if (x.size() != dy.size()) shape_mismatch("relu_backward", "gradient", x.size(), dy.size());
  Vector dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

double log_sum_exp(ConstSpan scores) {
  if (scores.empty()) throw ShapeError("log_sum_exp: empty score vector");
  const double peak = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - peak);
  return peak + std::log(acc);
}

Vector softmax(ConstSpan scores) {
  if (scores.size() < 2) throw ShapeError("softmax: need at least 2 classes");
  const double peak = *std::max_element(scores.begin(), scores.end());
  Vector p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - peak);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

LossWithGrad weighted_cross_entropy(ConstSpan scores, std::size_t label, ConstSpan weights) {
  if (label >= scores.size()) {
    std::ostringstream msg;
    msg << "weighted_cross_entropy: label " << label << " outside [0, " << scores.size() << ")";
    throw DataError(msg.str());
  }
  if (!weights.empty() && weights.size() != scores.size())
    shape_mismatch("weighted_cross_entropy", "weights", scores.size(), weights.size());
  const double w = weights.empty() ? 1.0 : weights[label];
  LossWithGrad out;
  out.loss = w * (log_sum_exp(scores) - scores[label]);
  out.grad = softmax(scores);
  out.grad[label] -= 1.0;
  for (double& g : out.grad) g *= w;
  return out;
}

MaxPoolResult temporal_max_pool(std::span<const ConstSpan> frames) {
  check_frames("temporal_max_pool", frames);
  MaxPoolResult out;
  out.pooled.assign(frames.front().begin(), frames.front().end());
  out.argmax.assign(out.pooled.size(), 0);
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const ConstSpan frame = frames[f];
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (frame[i] > out.pooled[i]) {
        out.pooled[i] = frame[i];
        out.argmax[i] = f;
      }
    }
  }
  return out;
}

std::vector<Vector> temporal_max_pool_backward(ConstSpan dpooled, std::span<const std::size_t> argmax,
                                               std::size_t frame_count) {
  if (argmax.size() != dpooled.size())
    shape_mismatch("temporal_max_pool_backward", "argmax", dpooled.size(), argmax.size());
  std::vector<Vector> grads(frame_count, Vector(dpooled.size(), 0.0));
  for (std::size_t i = 0; i < dpooled.size(); ++i) {
    if (argmax[i] >= frame_count) throw ShapeError("temporal_max_pool_backward: argmax out of range");
    grads[argmax[i]][i] = dpooled[i];
  }
  return grads;
}

Vector temporal_avg_pool(std::span<const ConstSpan> frames) {
  check_frames("temporal_avg_pool", frames);
  Vector out(frames.front().size(), 0.0);
  for (const ConstSpan frame : frames) {
    for (std::size_t i = 0; i < frame.size(); ++i) out[i] += frame[i];
  }
  const double n = static_cast<double>(frames.size());
  for (double& v : out) v /= n;
  return out;
}

std::vector<Vector> temporal_avg_pool_backward(ConstSpan dpooled, std::size_t frame_count) {
  if (frame_count == 0) throw ShapeError("temporal_avg_pool_backward: empty frame list");
  Vector share(dpooled.begin(), dpooled.end());
  const double n = static_cast<double>(frame_count);
  for (double& v : share) v /= n;
  return std::vector<Vector>(frame_count, share);
}

AdamState make_adam_state(std::span<const std::size_t> block_sizes, double lr) {
  AdamState state;
  state.lr = lr;
  for (std::size_t n : block_sizes) {
    state.first_moment.emplace_back(n, 0.0);
    state.second_moment.emplace_back(n, 0.0);
  }
  return state;
}

void adam_step(std::span<const MutSpan> params, std::span<const ConstSpan> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_step: parameter, gradient and moment block counts differ");
  if (!(state.lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size())
      shape_mismatch("adam_step", "gradient block", params[b].size(), grads[b].size());
    if (params[b].size() != state.first_moment[b].size())
      shape_mismatch("adam_step", "parameter block", state.first_moment[b].size(), params[b].size());
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    MutSpan p = params[b];
    const ConstSpan g = grads[b];
    Vector& m = state.first_moment[b];
    Vector& v = state.second_moment[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

Matrix lecun_init(std::size_t d_out, std::size_t d_in, Rng& rng) {
  if (d_out == 0 || d_in == 0) throw ShapeError("lecun_init: dimensions must be positive");
  const double bound = std::sqrt(3.0 / static_cast<double>(d_in));
  Matrix w(d_out, d_in);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

bool all_finite(ConstSpan values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

GradCheckResult grad_check(const LossFn& loss, ConstSpan params, ConstSpan analytic,
                           std::size_t probe_count, double epsilon, Rng& rng) {
  if (params.size() != analytic.size())
    shape_mismatch("grad_check", "analytic gradient", params.size(), analytic.size());
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4))
    throw ConfigError("grad_check: epsilon must lie in [1e-7, 1e-4]");

  std::vector<std::size_t> order(params.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t probes = std::min(probe_count, order.size());
  // Partial Fisher-Yates: the first `probes` entries become the sample.
  for (std::size_t i = 0; i < probes; ++i) {
    std::size_t j = i + rng.below(order.size() - i);
    std::swap(order[i], order[j]);
  }

  Vector work(params.begin(), params.end());
  GradCheckResult result;
  result.probes = probes;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t idx = order[p];
    const double original = work[idx];
    work[idx] = original + epsilon;
    const double up = loss(work);
    work[idx] = original - epsilon;
    const double down = loss(work);
    work[idx] = original;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: loss is not finite at probed coordinate");
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = relative_error(analytic[idx], numeric);
    if (err > result.max_rel_error || p == 0) {
      result.max_rel_error = err;
      result.worst_index = idx;
      result.worst_analytic = analytic[idx];
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace hmt
