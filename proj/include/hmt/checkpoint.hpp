#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "hmt/data.hpp"
#include "hmt/model.hpp"
#include "hmt/train.hpp"
#include "json.hpp"

namespace hmt {

nlohmann::json variant_to_json(const Variant& variant);
Variant variant_from_json(const nlohmann::json& doc);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

nlohmann::json label_set_json(const LabelSet& labels);
LabelSet label_set_from_json(const nlohmann::json& doc);

struct Checkpoint {
  LabelSet labels;
  TrainConfig config;  // includes the variant
  ModelParams params;
};

// Parameter tensors are stored row-major; doubles are written so that they
// parse back to the identical bit pattern.
std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hmt
