#include "hmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hmt/error.hpp"
#include "json.hpp"

namespace hmt {

using nlohmann::json;

LabelSet::LabelSet(std::string name, std::vector<std::string> emotions,
                   std::optional<std::string> neutral)
    : name_(std::move(name)), emotions_(std::move(emotions)), neutral_(std::move(neutral)) {
  if (emotions_.size() < 2) throw DataError("label set needs at least 2 emotion classes");
  std::set<std::string> seen;
  for (const auto& e : emotions_) {
    if (e.empty()) throw DataError("label set contains an empty class name");
    if (!seen.insert(e).second) throw DataError("label set repeats class '" + e + "'");
  }
  if (neutral_ && seen.count(*neutral_))
    throw DataError("neutral class '" + *neutral_ + "' also listed as an emotion");
}

LabelSet LabelSet::bred() {
  return LabelSet("bred", {"anger", "happiness", "fear", "sadness", "disgust", "surprise"},
                  "neutral");
}

ClassId LabelSet::neutral_id() const {
  if (!has_neutral()) throw DataError("label set '" + name_ + "' has no neutral class");
  return emotions_.size();
}

const std::string& LabelSet::channel_name(ClassId id) const {
  if (id < emotions_.size()) return emotions_[id];
  if (has_neutral() && id == emotions_.size()) return *neutral_;
  throw DataError("class id " + std::to_string(id) + " outside label set '" + name_ + "'");
}

std::optional<ClassId> LabelSet::find_emotion(std::string_view name) const {
  for (std::size_t i = 0; i < emotions_.size(); ++i) {
    if (emotions_[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<ClassId> LabelSet::find_channel(std::string_view name) const {
  if (auto id = find_emotion(name)) return id;
  if (neutral_ && *neutral_ == name) return emotions_.size();
  return std::nullopt;
}

LabelSet load_label_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label-set file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("label-set file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("classes") || !doc["classes"].is_array())
    throw DataError("label-set file " + path.string() + ": expected object with 'classes' array");
  std::vector<std::string> classes;
  for (const auto& c : doc["classes"]) {
    if (!c.is_string()) throw DataError("label-set file " + path.string() + ": class names must be strings");
    classes.push_back(c.get<std::string>());
  }
  std::optional<std::string> neutral;
  if (doc.contains("neutral") && !doc["neutral"].is_null()) neutral = doc["neutral"].get<std::string>();
  const std::string name = doc.value("name", path.stem().string());
  return LabelSet(name, std::move(classes), std::move(neutral));
}

std::string label_set_to_json(const LabelSet& labels) {
  json doc;
  doc["name"] = labels.name();
  doc["classes"] = labels.emotions();
  doc["neutral"] = labels.neutral_name() ? json(*labels.neutral_name()) : json(nullptr);
  return doc.dump(2) + "\n";
}

void validate_label(const HierarchicalLabel& label, const LabelSet& labels) {
  if (label.whole >= labels.emotion_count())
    throw DataError("whole-body label must be an emotion class");
  const std::optional<ClassId> neutral =
      labels.has_neutral() ? std::optional<ClassId>(labels.neutral_id()) : std::nullopt;
  auto check_channel = [&](ClassId c, const char* which) {
    if (c == label.whole) return;
    if (neutral && c == *neutral) return;
    throw DataError(std::string(which) + " label must equal the whole-body label or neutral");
  };
  check_channel(label.face, "face");
  check_channel(label.body, "body");
  if (neutral && label.face == *neutral && label.body == *neutral)
    throw DataError("face and body labels cannot both be neutral");
}

HierarchicalLabel derive_hierarchical_labels(ClassId y, bool uses_face, bool uses_body,
                                             const LabelSet& labels) {
  if (y >= labels.emotion_count()) throw DataError("whole-body label must be an emotion class");
  if (!uses_face && !uses_body) throw DataError("a sample must express the emotion through face or body");
  HierarchicalLabel out;
  out.whole = y;
  if (labels.has_neutral()) {
    out.face = uses_face ? y : labels.neutral_id();
    out.body = uses_body ? y : labels.neutral_id();
  } else {
    out.face = y;
    out.body = y;
  }
  return out;
}

SkeletonFrame filter_keypoints(const SkeletonFrame& frame, double threshold) {
  SkeletonFrame out = frame;
  for (Keypoint& kp : out.keypoints) {
    if (kp.confidence < threshold) {
      kp.x = 0.0;
      kp.y = 0.0;
    }
  }
  return out;
}

Vector flatten_pose(const SkeletonFrame& frame) {
  Vector out(kPoseDim);
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    out[2 * k] = frame.keypoints[k].x;
    out[2 * k + 1] = frame.keypoints[k].y;
  }
  return out;
}

SkeletonFrame unflatten_pose(ConstSpan flat) {
  if (flat.size() != kPoseDim) {
    throw ShapeError("unflatten_pose: got " + std::to_string(flat.size()) + " values, expected " +
                     std::to_string(kPoseDim));
  }
  SkeletonFrame frame;
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    frame.keypoints[k] = {flat[2 * k], flat[2 * k + 1], 1.0};
  }
  return frame;
}

std::vector<std::string> Dataset::subjects() const {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.subject);
  return {ids.begin(), ids.end()};
}

void validate_sample(const SampleSequence& sample, const LabelSet& labels) {
  if (sample.pose_frames.empty()) throw DataError("sample '" + sample.id + "' has no frames");
  if (sample.face_frames.size() != sample.pose_frames.size()) {
    throw DataError("sample '" + sample.id + "': " + std::to_string(sample.pose_frames.size()) +
                    " pose frames but " + std::to_string(sample.face_frames.size()) + " face frames");
  }
  std::size_t face_dim = 0;
  for (const auto& face : sample.face_frames) {
    if (!face) continue;
    if (face->empty()) throw DataError("sample '" + sample.id + "': empty face feature vector");
    if (face_dim == 0) face_dim = face->size();
    if (face->size() != face_dim) throw DataError("sample '" + sample.id + "': face feature sizes differ");
    if (!all_finite(*face)) throw DataError("sample '" + sample.id + "': non-finite face feature");
  }
  for (const auto& frame : sample.pose_frames) {
    for (const auto& kp : frame.keypoints) {
      if (!std::isfinite(kp.x) || !std::isfinite(kp.y))
        throw DataError("sample '" + sample.id + "': non-finite keypoint coordinate");
      if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0))
        throw DataError("sample '" + sample.id + "': keypoint confidence outside [0, 1]");
    }
  }
  try {
    validate_label(sample.label, labels);
  } catch (const DataError& e) {
    throw DataError("sample '" + sample.id + "': " + e.what());
  }
}

namespace {

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

SkeletonFrame parse_pose(const json& pose, std::size_t line) {
  if (!pose.is_array()) line_error(line, "'pose' must be an array of [x, y, conf] triples");
  if (pose.size() != kKeypointCount) {
    line_error(line, "pose has " + std::to_string(pose.size()) + " keypoints, expected " +
                         std::to_string(kKeypointCount));
  }
  SkeletonFrame frame;
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    const json& kp = pose[k];
    if (!kp.is_array() || kp.size() != 3 || !kp[0].is_number() || !kp[1].is_number() ||
        !kp[2].is_number()) {
      line_error(line, "keypoint " + std::to_string(k) + " must be [x, y, conf]");
    }
    frame.keypoints[k] = {kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()};
  }
  return frame;
}

ClassId parse_channel(const json& record, const char* key, ClassId whole, const LabelSet& labels,
                      std::size_t line) {
  if (!record.contains(key) || record[key].is_null()) return whole;  // not annotated
  if (!record[key].is_string()) line_error(line, std::string("'") + key + "' must be a string or null");
  const auto name = record[key].get<std::string>();
  const auto id = labels.find_channel(name);
  if (!id) line_error(line, std::string("unknown class '") + name + "' in '" + key + "'");
  return *id;
}

SampleSequence parse_record(const json& record, const LabelSet& labels, std::size_t line) {
  if (!record.is_object()) line_error(line, "record must be a JSON object");
  for (const char* key : {"id", "subject", "y"}) {
    if (!record.contains(key) || !record[key].is_string())
      line_error(line, std::string("missing string field '") + key + "'");
  }
  SampleSequence sample;
  sample.id = record["id"].get<std::string>();
  sample.subject = record["subject"].get<std::string>();
  const auto y_name = record["y"].get<std::string>();
  const auto y = labels.find_emotion(y_name);
  if (!y) line_error(line, "unknown class '" + y_name + "' in 'y'");
  sample.label.whole = *y;
  sample.label.face = parse_channel(record, "y_face", *y, labels, line);
  sample.label.body = parse_channel(record, "y_body", *y, labels, line);

  if (!record.contains("frames") || !record["frames"].is_array())
    line_error(line, "missing array field 'frames'");
  for (const json& frame : record["frames"]) {
    if (!frame.is_object() || !frame.contains("pose"))
      line_error(line, "each frame needs a 'pose' field");
    sample.pose_frames.push_back(parse_pose(frame["pose"], line));
    if (!frame.contains("face") || frame["face"].is_null()) {
      sample.face_frames.emplace_back();
      continue;
    }
    const json& face = frame["face"];
    if (!face.is_array()) line_error(line, "'face' must be an array of numbers or null");
    Vector feature;
    feature.reserve(face.size());
    for (const json& v : face) {
      if (!v.is_number()) line_error(line, "'face' must contain only numbers");
      feature.push_back(v.get<double>());
    }
    sample.face_frames.emplace_back(std::move(feature));
  }
  try {
    validate_sample(sample, labels);
  } catch (const DataError& e) {
    line_error(line, e.what());
  }
  return sample;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl, const LabelSet& labels) {
  Dataset dataset;
  dataset.labels = labels;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::set<std::string> ids;
  while (pos <= jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      line_error(line_no, std::string("malformed JSON: ") + e.what());
    }
    SampleSequence sample = parse_record(record, labels, line_no);
    if (!ids.insert(sample.id).second) line_error(line_no, "duplicate sample id '" + sample.id + "'");
    for (const auto& face : sample.face_frames) {
      if (!face) continue;
      if (dataset.face_dim == 0) dataset.face_dim = face->size();
      if (face->size() != dataset.face_dim) {
        line_error(line_no, "face feature has " + std::to_string(face->size()) +
                                " values, dataset uses " + std::to_string(dataset.face_dim));
      }
    }
    dataset.samples.push_back(std::move(sample));
  }
  if (dataset.samples.empty()) throw DataError("dataset is empty");
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, const LabelSet& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_dataset(buffer.str(), labels);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_dataset(const Dataset& dataset) {
  const LabelSet& labels = dataset.labels;
  std::string out;
  for (const auto& sample : dataset.samples) {
    json record;
    record["id"] = sample.id;
    record["subject"] = sample.subject;
    record["y"] = labels.emotions().at(sample.label.whole);
    record["y_face"] = labels.channel_name(sample.label.face);
    record["y_body"] = labels.channel_name(sample.label.body);
    json frames = json::array();
    for (std::size_t f = 0; f < sample.frame_count(); ++f) {
      json pose = json::array();
      for (const auto& kp : sample.pose_frames[f].keypoints) pose.push_back({kp.x, kp.y, kp.confidence});
      json frame;
      frame["pose"] = std::move(pose);
      frame["face"] = sample.face_frames[f] ? json(*sample.face_frames[f]) : json(nullptr);
      frames.push_back(std::move(frame));
    }
    record["frames"] = std::move(frames);
    out += record.dump();
    out += '\n';
  }
  return out;
}

}  // namespace hmt
