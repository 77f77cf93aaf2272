#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/numcore.hpp"

namespace hmt {

// Class ids index a LabelSet. Whole-body labels use ids [0, emotion_count());
// channel labels additionally use neutral_id() when the set has a neutral class.
using ClassId = std::size_t;

class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::string name, std::vector<std::string> emotions, std::optional<std::string> neutral);

  static LabelSet bred();

  const std::string& name() const { return name_; }
  const std::vector<std::string>& emotions() const { return emotions_; }
  bool has_neutral() const { return neutral_.has_value(); }
  const std::optional<std::string>& neutral_name() const { return neutral_; }

  std::size_t emotion_count() const { return emotions_.size(); }
  // Emotions plus neutral when present.
  std::size_t channel_count() const { return emotions_.size() + (has_neutral() ? 1 : 0); }
  ClassId neutral_id() const;

  // Name of a channel class id (emotions first, neutral last).
  const std::string& channel_name(ClassId id) const;
  std::optional<ClassId> find_emotion(std::string_view name) const;
  std::optional<ClassId> find_channel(std::string_view name) const;

  bool operator==(const LabelSet&) const = default;

 private:
  std::string name_;
  std::vector<std::string> emotions_;
  std::optional<std::string> neutral_;
};

LabelSet load_label_set(const std::filesystem::path& path);
std::string label_set_to_json(const LabelSet& labels);

struct HierarchicalLabel {
  ClassId whole = 0;  // y, never neutral
  ClassId face = 0;   // y_face, channel id
  ClassId body = 0;   // y_body, channel id

  bool operator==(const HierarchicalLabel&) const = default;
};

// Throws DataError unless y_face, y_body are in {y, neutral} and not both neutral.
void validate_label(const HierarchicalLabel& label, const LabelSet& labels);

HierarchicalLabel derive_hierarchical_labels(ClassId y, bool uses_face, bool uses_body,
                                             const LabelSet& labels);

inline constexpr std::size_t kBodyKeypoints = 25;
inline constexpr std::size_t kHandKeypoints = 21;
inline constexpr std::size_t kKeypointCount = kBodyKeypoints + 2 * kHandKeypoints;  // 67
inline constexpr std::size_t kPoseDim = 2 * kKeypointCount;                          // 134

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;

  bool operator==(const Keypoint&) const = default;
};

// Keypoint order: body joints 0-24, left hand 0-20, right hand 0-20.
struct SkeletonFrame {
  std::array<Keypoint, kKeypointCount> keypoints{};

  bool operator==(const SkeletonFrame&) const = default;
};

// Keypoints with confidence strictly below `threshold` get x = y = 0.
SkeletonFrame filter_keypoints(const SkeletonFrame& frame, double threshold);

// (x0, y0, x1, y1, ...) in keypoint order; confidences dropped.
Vector flatten_pose(const SkeletonFrame& frame);
// Inverse of flatten_pose on coordinates; confidences are set to 1.
SkeletonFrame unflatten_pose(ConstSpan flat);

struct SampleSequence {
  std::string id;
  std::string subject;
  HierarchicalLabel label;
  std::vector<SkeletonFrame> pose_frames;
  std::vector<std::optional<Vector>> face_frames;  // empty optional: no face detected

  std::size_t frame_count() const { return pose_frames.size(); }
  bool operator==(const SampleSequence&) const = default;
};

struct Dataset {
  LabelSet labels;
  std::vector<SampleSequence> samples;
  std::size_t face_dim = 0;  // 0 when no sample has any face frame

  std::vector<std::string> subjects() const;  // distinct, sorted
  bool operator==(const Dataset&) const = default;
};

// Throws DataError on any schema or invariant violation.
void validate_sample(const SampleSequence& sample, const LabelSet& labels);

Dataset load_dataset(const std::filesystem::path& path, const LabelSet& labels);
Dataset parse_dataset(std::string_view jsonl, const LabelSet& labels);
std::string serialize_dataset(const Dataset& dataset);

}  // namespace hmt
