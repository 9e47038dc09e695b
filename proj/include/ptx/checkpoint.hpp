#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "ptx/models.hpp"

namespace ptx {

// On-disk layout (little endian):
//   magic "PTXCKPT\0" | u32 format version | u32 header length | JSON header
//   | u32 tensor count | per tensor: u32 name length, name, u8 dtype
//   (0 = f32, 1 = i64), u32 rank, i64 dims[rank], raw data.
// The JSON header holds {"arch", "config", "meta"}. Classifier and MIL
// checkpoints share arch "resnet50" and load into each other unchanged.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string arch;
  nlohmann::json config;
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

nlohmann::json to_json(const CnnConfig& config);
CnnConfig cnn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FcnConfig& config);
FcnConfig fcn_config_from_json(const nlohmann::json& j);

// Parameters and buffers of `model`; written to a temp file then renamed.
void save_checkpoint(const std::filesystem::path& path, const std::string& arch, const nlohmann::json& config,
                     const nlohmann::json& meta, torch::nn::Module& model);
void save_checkpoint(const std::filesystem::path& path, ResNet50& model, const nlohmann::json& meta = {});
void save_checkpoint(const std::filesystem::path& path, UNet& model, const nlohmann::json& meta = {});

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every tensor of `ckpt` into the same-named parameter or buffer;
// shapes must match exactly and every model tensor must be present.
void load_state(torch::nn::Module& model, const Checkpoint& ckpt);

ResNet50 load_cnn(const std::filesystem::path& path);
UNet load_fcn(const std::filesystem::path& path);

}  // namespace ptx
