#include "hmt/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "hmt/error.hpp"

namespace hmt {

ChannelUsage channel_usage_for(const LabelSet& labels, ClassId emotion) {
  const std::string& name = labels.emotions().at(emotion);
  for (const auto& row : kBredChannelUsage) {
    if (row.emotion == name) return row;
  }
  return kBredChannelUsage[emotion % kBredChannelUsage.size()];
}

void validate(const SyntheticConfig& config) {
  if (config.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (config.subjects < 2) throw ConfigError("synthetic data needs at least 2 subjects");
  if (config.samples_per_class < 1) throw ConfigError("samples per class must be at least 1");
  if (config.frames < 1) throw ConfigError("frames per sample must be at least 1");
  if (config.face_dim < 1) throw ConfigError("face feature dimension must be positive");
  if (config.face_noise < 0.0 || config.pose_noise < 0.0 || config.subject_spread < 0.0)
    throw ConfigError("noise scales must be non-negative");
  if (config.face_missing_rate < 0.0 || config.face_missing_rate > 1.0 ||
      config.low_confidence_rate < 0.0 || config.low_confidence_rate > 1.0)
    throw ConfigError("rates must lie in [0, 1]");
}

LabelSet synthetic_label_set(std::size_t classes) {
  if (classes == 6) return LabelSet::bred();
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02zu", c);
    names.emplace_back(buf);
  }
  return LabelSet("synthetic", std::move(names), "neutral");
}

std::pair<bool, bool> draw_channel_usage(const ChannelUsage& usage, Rng& rng) {
  if (usage.face + usage.body < 1.0 - 1e-12)
    throw ConfigError("channel usage rates must sum to at least 1 so that every sample uses a channel");
  // face-only w.p. 1 - body, body-only w.p. 1 - face, both otherwise.
  const double u = rng.uniform();
  const double face_only = 1.0 - usage.body;
  const double body_only = 1.0 - usage.face;
  if (u < face_only) return {true, false};
  if (u < face_only + body_only) return {false, true};
  return {true, true};
}

namespace {

constexpr double kCanvasCenterX = 320.0;
constexpr double kCanvasCenterY = 240.0;
constexpr double kFaceSignal = 0.25;

struct Prototypes {
  std::vector<Vector> face;               // per channel class
  std::vector<Vector> pose_displacement;  // per channel class, kPoseDim
  Vector base_pose;                       // kPoseDim
};

Prototypes make_prototypes(const SyntheticConfig& config, std::size_t channel_classes, Rng& rng) {
  Prototypes p;
  p.base_pose.resize(kPoseDim);
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    p.base_pose[2 * k] = kCanvasCenterX + rng.uniform(-100.0, 100.0);
    p.base_pose[2 * k + 1] = kCanvasCenterY + rng.uniform(-160.0, 160.0);
  }
  const std::size_t neutral = channel_classes - 1;
  for (std::size_t c = 0; c < channel_classes; ++c) {
    Vector face(config.face_dim);
    for (double& v : face) v = kFaceSignal * rng.normal();
    p.face.push_back(std::move(face));
    Vector disp(kPoseDim, 0.0);
    if (c != neutral) {
      for (double& v : disp) v = config.pose_signal * rng.normal();
    }
    p.pose_displacement.push_back(std::move(disp));
  }
  return p;
}

}  // namespace

Dataset gen_synthetic(const SyntheticConfig& config, RngSeed seed) {
  validate(config);
  Rng rng(seed);
  Dataset dataset;
  dataset.labels = synthetic_label_set(config.classes);
  dataset.face_dim = config.face_dim;
  const LabelSet& labels = dataset.labels;
  const std::size_t channel_classes = labels.channel_count();
  const Prototypes proto = make_prototypes(config, channel_classes, rng);

  for (std::size_t s = 0; s < config.subjects; ++s) {
    char subject[32];
    std::snprintf(subject, sizeof subject, "subj_%02zu", s);
    Vector subject_face(config.face_dim);
    for (double& v : subject_face) v = config.subject_spread * kFaceSignal * rng.normal();
    const double shift_x = rng.normal(0.0, 10.0);
    const double shift_y = rng.normal(0.0, 10.0);

    for (ClassId c = 0; c < config.classes; ++c) {
      const ChannelUsage usage = channel_usage_for(labels, c);
      for (std::size_t r = 0; r < config.samples_per_class; ++r) {
        const auto [uses_face, uses_body] = draw_channel_usage(usage, rng);
        SampleSequence sample;
        char id[64];
        std::snprintf(id, sizeof id, "%s_%s_%zu", subject, labels.emotions()[c].c_str(), r);
        sample.id = id;
        sample.subject = subject;
        sample.label = derive_hierarchical_labels(c, uses_face, uses_body, labels);
        const Vector& face_proto = proto.face[sample.label.face];
        const Vector& disp = proto.pose_displacement[sample.label.body];

        for (std::size_t t = 0; t < config.frames; ++t) {
          // Expression rises to a peak mid-sequence.
          const double phase = (static_cast<double>(t) + 0.5) / static_cast<double>(config.frames);
          const double intensity = 0.4 + 0.6 * std::sin(std::numbers::pi * phase);

          SkeletonFrame frame;
          for (std::size_t k = 0; k < kKeypointCount; ++k) {
            Keypoint& kp = frame.keypoints[k];
            kp.x = proto.base_pose[2 * k] + shift_x + intensity * disp[2 * k] +
                   rng.normal(0.0, config.pose_noise);
            kp.y = proto.base_pose[2 * k + 1] + shift_y + intensity * disp[2 * k + 1] +
                   rng.normal(0.0, config.pose_noise);
            if (rng.bernoulli(config.low_confidence_rate)) {
              kp.confidence = rng.uniform(0.0, 0.1);
              kp.x += rng.normal(0.0, 4.0 * config.pose_noise);
              kp.y += rng.normal(0.0, 4.0 * config.pose_noise);
            } else {
              kp.confidence = rng.uniform(0.1, 1.0);
            }
          }
          sample.pose_frames.push_back(frame);

          if (rng.bernoulli(config.face_missing_rate)) {
            sample.face_frames.emplace_back();
            continue;
          }
          Vector face(config.face_dim);
          for (std::size_t i = 0; i < config.face_dim; ++i) {
            face[i] = intensity * face_proto[i] + subject_face[i] +
                      config.face_noise * kFaceSignal * rng.normal();
          }
          sample.face_frames.emplace_back(std::move(face));
        }
        dataset.samples.push_back(std::move(sample));
      }
    }
  }
  return dataset;
}

}  // namespace hmt
