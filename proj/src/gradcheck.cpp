#include "hmt/gradcheck.hpp"

#include <algorithm>

#include "hmt/error.hpp"
#include "hmt/synthetic.hpp"

namespace hmt {

double ModelGradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& b : blocks) worst = std::max(worst, b.result.max_rel_error);
  return worst;
}

std::vector<SampleSequence> random_samples(const LabelSet& labels, std::size_t count, std::size_t frames,
                                           std::size_t face_dim, Rng& rng) {
  std::vector<SampleSequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    SampleSequence s;
    s.id = "probe_" + std::to_string(i);
    s.subject = "subject_" + std::to_string(i);
    const ClassId y = rng.below(labels.emotion_count());
    const std::size_t usage = rng.below(3);  // 0: face only, 1: body only, 2: both
    s.label = derive_hierarchical_labels(y, usage != 1, usage != 0, labels);
    for (std::size_t f = 0; f < frames; ++f) {
      SkeletonFrame frame;
      for (Keypoint& kp : frame.keypoints) {
        kp.x = rng.uniform(-2.0, 2.0);
        kp.y = rng.uniform(-2.0, 2.0);
        kp.confidence = rng.uniform();
      }
      s.pose_frames.push_back(frame);
      Vector face(face_dim);
      for (double& v : face) v = rng.normal();
      s.face_frames.emplace_back(std::move(face));
    }
    out.push_back(std::move(s));
  }
  return out;
}

double batch_loss(std::span<const SampleSequence> samples, const ModelParams& params, const Variant& variant,
                  ConstSpan body_weights, double threshold, ModelParams* grads) {
  double total = 0.0;
  if (grads) grads->set_zero();
  for (const auto& sample : samples) {
    const ForwardTrace trace = hmt_forward_trace(sample, params, variant, threshold);
    const LossResult loss = hmt_loss_with_grad(trace.outputs, sample.label, variant, body_weights);
    total += loss.breakdown.total;
    if (grads) hmt_backward(trace, loss.grads, params, *grads);
  }
  const double n = static_cast<double>(samples.size());
  if (grads) {
    for (auto& b : grads->blocks()) {
      for (double& v : b.values) v /= n;
    }
  }
  return total / n;
}

ModelGradCheckReport check_model_gradients(const ModelGradCheckConfig& config) {
  if (config.classes < 2 || config.frames < 1 || config.samples < 1)
    throw ConfigError("gradient check needs >= 2 classes, >= 1 frame and >= 1 sample");
  Rng rng(config.seed);
  const LabelSet used = synthetic_label_set(config.classes);
  const ModelDims dims = dims_for(used, config.face_dim, config.variant, config.body_hidden);
  ModelParams params = ModelParams::init(dims, rng);
  for (DenseLayer* layer : {&params.face_fc, &params.body_hidden, &params.body_fc, &params.whole_fc,
                            &params.fusion_fc}) {
    for (double& b : layer->bias) b = rng.uniform(-0.5, 0.5);
  }
  const auto samples = random_samples(used, config.samples, config.frames, config.face_dim, rng);
  Vector body_weights(dims.channel_classes);
  for (double& w : body_weights) w = rng.uniform(0.5, 2.0);

  ModelParams grads = ModelParams::zeros(dims);
  batch_loss(samples, params, config.variant, body_weights, config.threshold, &grads);
  if (config.corrupt) {
    for (auto& b : grads.blocks()) {
      for (double& v : b.values) v *= 2.0;
    }
  }

  ModelGradCheckReport report;
  auto param_blocks = params.blocks();
  const auto grad_blocks = grads.blocks();
  for (std::size_t b = 0; b < param_blocks.size(); ++b) {
    MutSpan target = param_blocks[b].values;
    const Vector original(target.begin(), target.end());
    const LossFn loss = [&](ConstSpan values) {
      std::copy(values.begin(), values.end(), target.begin());
      const double l = batch_loss(samples, params, config.variant, body_weights, config.threshold, nullptr);
      std::copy(original.begin(), original.end(), target.begin());
      return l;
    };
    BlockCheck check;
    check.name = std::string(param_blocks[b].name);
    check.size = target.size();
    const ConstSpan analytic = grad_blocks[b].values;
    check.used = std::any_of(analytic.begin(), analytic.end(), [](double v) { return v != 0.0; });
    check.result = grad_check(loss, original, analytic, config.probes, config.epsilon, rng);
    report.blocks.push_back(std::move(check));
  }
  return report;
}

}  // namespace hmt
