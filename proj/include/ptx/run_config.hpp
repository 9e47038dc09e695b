#pragma once

#include <filesystem>
#include <json.hpp>

#include "ptx/preprocess.hpp"
#include "ptx/training.hpp"

namespace ptx {

nlohmann::json to_json(const Geometry& geo);
Geometry geometry_from_json(const nlohmann::json& j);  // "full", "desk" or an object

nlohmann::json to_json(const AugmentationParams& p);
// Keys present in `j` override the matching fields of `p`; null disables an
// optional transform.
void apply_json(AugmentationParams& p, const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
// Top-level keys apply to every method; a section named after the method
// ("cnn", "mil", "fcn") overrides them.
void apply_json(TrainConfig& c, const nlohmann::json& j);

// Defaults for `m`, then the file (when given). Command-line flags are applied
// by the caller afterwards, giving flags > file > defaults.
TrainConfig load_train_config(Method m, const std::filesystem::path& file = {});

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace ptx
