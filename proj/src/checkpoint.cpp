#include "hmt/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

namespace {

std::string_view sep_branch_name(SepBranch b) {
  switch (b) {
    case SepBranch::Both: return "both";
    case SepBranch::Face: return "face";
    case SepBranch::Body: return "body";
  }
  return "both";
}

SepBranch parse_sep_branch(const std::string& name) {
  if (name == "both") return SepBranch::Both;
  if (name == "face") return SepBranch::Face;
  if (name == "body") return SepBranch::Body;
  throw ConfigError("unknown SEP branch '" + name + "'");
}

json layer_json(const DenseLayer& layer) {
  json doc;
  doc["rows"] = layer.out_dim();
  doc["cols"] = layer.in_dim();
  doc["weight"] = std::vector<double>(layer.weight.values().begin(), layer.weight.values().end());
  doc["bias"] = layer.bias;
  return doc;
}

DenseLayer layer_from_json(const json& doc, std::size_t rows, std::size_t cols, const std::string& name) {
  const auto r = doc.at("rows").get<std::size_t>();
  const auto c = doc.at("cols").get<std::size_t>();
  if (r != rows || c != cols) {
    throw ShapeError("checkpoint layer " + name + " is " + std::to_string(r) + "x" + std::to_string(c) +
                     ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  DenseLayer layer(rows, cols);
  const auto weight = doc.at("weight").get<std::vector<double>>();
  const auto bias = doc.at("bias").get<std::vector<double>>();
  if (weight.size() != rows * cols || bias.size() != rows)
    throw ShapeError("checkpoint layer " + name + " has inconsistent value counts");
  std::copy(weight.begin(), weight.end(), layer.weight.values().begin());
  layer.bias = bias;
  return layer;
}

}  // namespace

json variant_to_json(const Variant& variant) {
  return json{{"method", std::string(method_name(variant.method))},
              {"frame_level", variant.frame_level},
              {"two_vector_fusion", variant.two_vector_fusion},
              {"sep_branch", std::string(sep_branch_name(variant.sep_branch))}};
}

Variant variant_from_json(const json& doc) {
  Variant v;
  v.method = parse_method(doc.at("method").get<std::string>());
  v.frame_level = doc.value("frame_level", false);
  v.two_vector_fusion = doc.value("two_vector_fusion", false);
  v.sep_branch = parse_sep_branch(doc.value("sep_branch", std::string("both")));
  return v;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"lr_drop_epoch", c.lr_drop_epoch},
              {"lr_drop_factor", c.lr_drop_factor},
              {"batch_size", c.batch_size},
              {"variant", variant_to_json(c.variant)},
              {"keypoint_threshold", c.keypoint_threshold},
              {"seed", c.seed.value},
              {"body_hidden", c.body_hidden},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig train_config_from_json(const json& doc) {
  TrainConfig c;
  c.epochs = doc.value("epochs", c.epochs);
  c.lr = doc.value("lr", c.lr);
  c.lr_drop_epoch = doc.value("lr_drop_epoch", c.lr_drop_epoch);
  c.lr_drop_factor = doc.value("lr_drop_factor", c.lr_drop_factor);
  c.batch_size = doc.value("batch_size", c.batch_size);
  if (doc.contains("variant")) c.variant = variant_from_json(doc["variant"]);
  c.keypoint_threshold = doc.value("keypoint_threshold", c.keypoint_threshold);
  c.seed.value = doc.value("seed", c.seed.value);
  c.body_hidden = doc.value("body_hidden", c.body_hidden);
  c.beta1 = doc.value("beta1", c.beta1);
  c.beta2 = doc.value("beta2", c.beta2);
  c.adam_epsilon = doc.value("adam_epsilon", c.adam_epsilon);
  return c;
}

json label_set_json(const LabelSet& labels) {
  return json{{"name", labels.name()},
              {"classes", labels.emotions()},
              {"neutral", labels.neutral_name() ? json(*labels.neutral_name()) : json(nullptr)}};
}

LabelSet label_set_from_json(const json& doc) {
  std::optional<std::string> neutral;
  if (doc.contains("neutral") && !doc["neutral"].is_null()) neutral = doc["neutral"].get<std::string>();
  return LabelSet(doc.value("name", std::string("labels")), doc.at("classes").get<std::vector<std::string>>(),
                  neutral);
}

std::string checkpoint_to_json(const Checkpoint& ck) {
  const ModelDims& d = ck.params.dims;
  json doc;
  doc["format"] = "hmt-checkpoint";
  doc["version"] = 1;
  doc["label_set"] = label_set_json(ck.labels);
  doc["variant"] = variant_to_json(ck.config.variant);
  doc["config"] = train_config_to_json(ck.config);
  doc["dims"] = json{{"face_dim", d.face_dim},
                     {"pose_dim", d.pose_dim},
                     {"body_hidden", d.body_hidden},
                     {"channel_classes", d.channel_classes},
                     {"whole_classes", d.whole_classes},
                     {"fusion_uses_whole", d.fusion_uses_whole}};
  doc["layers"] = json{{"face_fc", layer_json(ck.params.face_fc)},
                       {"body_hidden", layer_json(ck.params.body_hidden)},
                       {"body_fc", layer_json(ck.params.body_fc)},
                       {"whole_fc", layer_json(ck.params.whole_fc)},
                       {"fusion_fc", layer_json(ck.params.fusion_fc)}};
  return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (doc.value("format", std::string()) != "hmt-checkpoint") throw DataError("not an hmt checkpoint");
  try {
    Checkpoint ck;
    ck.labels = label_set_from_json(doc.at("label_set"));
    ck.config = train_config_from_json(doc.at("config"));
    ck.config.variant = variant_from_json(doc.at("variant"));
    const json& d = doc.at("dims");
    ModelDims dims;
    dims.face_dim = d.at("face_dim").get<std::size_t>();
    dims.pose_dim = d.at("pose_dim").get<std::size_t>();
    dims.body_hidden = d.at("body_hidden").get<std::size_t>();
    dims.channel_classes = d.at("channel_classes").get<std::size_t>();
    dims.whole_classes = d.at("whole_classes").get<std::size_t>();
    dims.fusion_uses_whole = d.at("fusion_uses_whole").get<bool>();
    if (dims.pose_dim != kPoseDim) throw ShapeError("checkpoint pose_dim must be 134");
    if (dims.channel_classes != ck.labels.channel_count() || dims.whole_classes != ck.labels.emotion_count())
      throw ShapeError("checkpoint dimensions do not match its label set");
    const json& layers = doc.at("layers");
    ck.params.dims = dims;
    ck.params.face_fc = layer_from_json(layers.at("face_fc"), dims.channel_classes, dims.face_dim, "face_fc");
    ck.params.body_hidden =
        layer_from_json(layers.at("body_hidden"), dims.body_hidden, dims.pose_dim, "body_hidden");
    ck.params.body_fc = layer_from_json(layers.at("body_fc"), dims.channel_classes, dims.body_hidden, "body_fc");
    ck.params.whole_fc = layer_from_json(layers.at("whole_fc"), dims.whole_classes, dims.whole_input(), "whole_fc");
    ck.params.fusion_fc =
        layer_from_json(layers.at("fusion_fc"), dims.whole_classes, dims.fusion_input(), "fusion_fc");
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

}  // namespace hmt
