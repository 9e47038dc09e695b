#include "ptx/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ptx {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'X', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("truncated checkpoint: " + path.string());
  return v;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(torch::nn::Module& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : model.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : model.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, value] : tensors) {
    if (key == name) return &value;
  }
  return nullptr;
}

nlohmann::json to_json(const CnnConfig& c) {
  return {{"input_size", c.input_size},
          {"in_channels", c.in_channels},
          {"extra_pool", to_string(c.extra_pool)},
          {"out_classes", c.out_classes}};
}

CnnConfig cnn_config_from_json(const nlohmann::json& j) {
  CnnConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.extra_pool = extra_pool_from_string(j.value("extra_pool", to_string(c.extra_pool)));
  c.out_classes = j.value("out_classes", c.out_classes);
  return c;
}

nlohmann::json to_json(const FcnConfig& c) {
  return {{"levels", c.levels},
          {"base_width", c.base_width},
          {"attention", c.attention},
          {"in_channels", c.in_channels},
          {"norm_eps", c.norm_eps}};
}

FcnConfig fcn_config_from_json(const nlohmann::json& j) {
  FcnConfig c;
  c.levels = j.value("levels", c.levels);
  c.base_width = j.value("base_width", c.base_width);
  c.attention = j.value("attention", c.attention);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.norm_eps = j.value("norm_eps", c.norm_eps);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& arch, const nlohmann::json& config,
                     const nlohmann::json& meta, torch::nn::Module& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string header = nlohmann::json{{"arch", arch}, {"config", config}, {"meta", meta}}.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const auto state = named_state(model);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, value] : state) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      torch::Tensor t = value.detach().to(torch::kCPU).contiguous();
      std::uint8_t dtype = 0;
      if (t.scalar_type() == torch::kLong) {
        dtype = 1;
      } else {
        t = t.to(torch::kFloat32);
      }
      put<std::uint8_t>(out, dtype);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) put<std::int64_t>(out, d);
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    if (!out) throw Error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, ResNet50& model, const nlohmann::json& meta) {
  save_checkpoint(path, "resnet50", to_json(model->config()), meta, *model);
}

void save_checkpoint(const std::filesystem::path& path, UNet& model, const nlohmann::json& meta) {
  save_checkpoint(path, "unet", to_json(model->config()), meta, *model);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  std::string header(get<std::uint32_t>(in, path), '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header.size()))) {
    throw Error("truncated checkpoint: " + path.string());
  }
  const auto j = nlohmann::json::parse(header);
  Checkpoint ckpt;
  ckpt.arch = j.at("arch").get<std::string>();
  ckpt.config = j.at("config");
  ckpt.meta = j.value("meta", nlohmann::json::object());

  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto dtype = get<std::uint8_t>(in, path);
    const auto rank = get<std::uint32_t>(in, path);
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = get<std::int64_t>(in, path);
    auto t = torch::empty(dims, dtype == 1 ? torch::kLong : torch::kFloat32);
    if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()))) {
      throw Error("truncated checkpoint: " + path.string());
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void load_state(torch::nn::Module& model, const Checkpoint& ckpt) {
  torch::NoGradGuard no_grad;
  for (auto& [name, target] : named_state(model)) {
    const torch::Tensor* src = ckpt.find(name);
    if (!src) throw Error("checkpoint lacks tensor '" + name + "'");
    if (src->sizes() != target.sizes()) throw Error("checkpoint tensor '" + name + "' has a different shape");
    target.copy_(*src);
  }
}

ResNet50 load_cnn(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.arch != "resnet50") throw Error("checkpoint is not a classifier (arch " + ckpt.arch + "): " + path.string());
  ResNet50 model(cnn_config_from_json(ckpt.config));
  load_state(*model, ckpt);
  return model;
}

UNet load_fcn(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.arch != "unet") throw Error("checkpoint is not a segmenter (arch " + ckpt.arch + "): " + path.string());
  UNet model(fcn_config_from_json(ckpt.config));
  load_state(*model, ckpt);
  return model;
}

}  // namespace ptx
