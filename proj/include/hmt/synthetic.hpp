#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "hmt/data.hpp"
#include "hmt/rng.hpp"

namespace hmt {

// Fraction of samples per emotion in which the emotion is expressed through
// the face and through the body (BabyRobot Emotion Database annotations).
struct ChannelUsage {
  std::string_view emotion;
  double face;
  double body;
};

inline constexpr std::array<ChannelUsage, 6> kBredChannelUsage{{
    {"happiness", 1.00, 0.20},
    {"sadness", 0.86, 0.49},
    {"surprise", 1.00, 0.43},
    {"fear", 0.42, 0.98},
    {"disgust", 0.98, 0.42},
    {"anger", 0.85, 0.70},
}};

// Usage rates for a class of a generated label set. BRED emotion names map to
// their own row; generic class names cycle through the table.
ChannelUsage channel_usage_for(const LabelSet& labels, ClassId emotion);

struct SyntheticConfig {
  std::size_t classes = 6;
  std::size_t subjects = 30;
  std::size_t samples_per_class = 1;  // per subject
  std::size_t frames = 10;
  std::size_t face_dim = 2048;
  // Per-coordinate face-feature noise, relative to a unit-variance prototype.
  double face_noise = 3.0;
  // Per-keypoint pose jitter in pixels.
  double pose_noise = 12.0;
  // Magnitude of per-class keypoint displacements in pixels.
  double pose_signal = 30.0;
  double subject_spread = 0.5;
  double face_missing_rate = 0.05;
  double low_confidence_rate = 0.05;
};

void validate(const SyntheticConfig& config);

LabelSet synthetic_label_set(std::size_t classes);

// Draws (uses_face, uses_body) with the given marginals and never both false.
// Requires face + body >= 1.
std::pair<bool, bool> draw_channel_usage(const ChannelUsage& usage, Rng& rng);

Dataset gen_synthetic(const SyntheticConfig& config, RngSeed seed);

}  // namespace hmt
