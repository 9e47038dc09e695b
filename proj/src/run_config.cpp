#include "ptx/run_config.hpp"

#include <fstream>

#include "ptx/checkpoint.hpp"
#include "ptx/error.hpp"

namespace ptx {

namespace {

nlohmann::json interval(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

Interval interval_from(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) throw UsageError(std::string("config: '") + key + "' must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

void optional_interval(std::optional<Interval>& target, const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return;
  if (j[key].is_null()) {
    target.reset();
  } else {
    target = interval_from(j[key], key);
  }
}

template <typename T>
void set_if(const nlohmann::json& j, const char* key, T& target) {
  if (j.contains(key)) target = j[key].get<T>();
}

void apply_flat(TrainConfig& c, const nlohmann::json& j) {
  set_if(j, "learning_rate", c.learning_rate);
  set_if(j, "epochs", c.epochs);
  set_if(j, "batch_size", c.batch_size);
  set_if(j, "decay", c.decay);
  set_if(j, "beta1", c.beta1);
  set_if(j, "beta2", c.beta2);
  set_if(j, "seed", c.seed);
  set_if(j, "fold", c.fold);
  set_if(j, "k", c.k);
  set_if(j, "augment", c.augment);
  if (j.contains("geometry")) c.geometry = geometry_from_json(j["geometry"]);
  if (j.contains("augmentation")) apply_json(c.augmentation, j["augmentation"]);
  if (j.contains("cnn_model")) {
    const auto& m = j["cnn_model"];
    if (m.contains("extra_pool")) c.cnn.extra_pool = extra_pool_from_string(m["extra_pool"].get<std::string>());
    if (m.contains("pretrained")) c.cnn.pretrained = m["pretrained"].get<std::string>();
  }
  if (j.contains("fcn_model")) {
    const auto& m = j["fcn_model"];
    set_if(m, "levels", c.fcn.levels);
    set_if(m, "base_width", c.fcn.base_width);
    set_if(m, "attention", c.fcn.attention);
    set_if(m, "norm_eps", c.fcn.norm_eps);
  }
  if (j.contains("pixel_weights")) {
    set_if(j["pixel_weights"], "positive", c.pixel_weights.positive);
    set_if(j["pixel_weights"], "negative", c.pixel_weights.negative);
  }
  if (j.contains("init_checkpoint")) {
    if (j["init_checkpoint"].is_null()) {
      c.init_checkpoint.reset();
    } else {
      c.init_checkpoint = j["init_checkpoint"].get<std::string>();
    }
  }
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
}

}  // namespace

nlohmann::json to_json(const Geometry& g) {
  return {{"resize_side", g.resize_side}, {"crop_side", g.crop_side}, {"bag_side", g.bag_side}, {"grid", g.grid}};
}

Geometry geometry_from_json(const nlohmann::json& j) {
  if (j.is_string()) return Geometry::named(j.get<std::string>());
  Geometry g;
  set_if(j, "resize_side", g.resize_side);
  set_if(j, "crop_side", g.crop_side);
  set_if(j, "bag_side", g.bag_side);
  set_if(j, "grid", g.grid);
  g.validate();
  return g;
}

nlohmann::json to_json(const AugmentationParams& p) {
  auto opt = [](const std::optional<Interval>& i) { return i ? interval(*i) : nlohmann::json(nullptr); };
  return {{"translation", interval(p.translation)},
          {"scale", interval(p.scale)},
          {"rotation_deg", interval(p.rotation_deg)},
          {"flip_probability", p.flip_probability},
          {"window_center", opt(p.window_center)},
          {"window_width", opt(p.window_width)},
          {"dose", opt(p.dose)},
          {"seed", p.seed}};
}

void apply_json(AugmentationParams& p, const nlohmann::json& j) {
  if (j.contains("translation")) p.translation = interval_from(j["translation"], "translation");
  if (j.contains("scale")) p.scale = interval_from(j["scale"], "scale");
  if (j.contains("rotation_deg")) p.rotation_deg = interval_from(j["rotation_deg"], "rotation_deg");
  set_if(j, "flip_probability", p.flip_probability);
  optional_interval(p.window_center, j, "window_center");
  optional_interval(p.window_width, j, "window_width");
  optional_interval(p.dose, j, "dose");
  set_if(j, "seed", p.seed);
  p.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"method", to_string(c.method)},
                      {"learning_rate", c.learning_rate},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"decay", c.decay},
                      {"beta1", c.beta1},
                      {"beta2", c.beta2},
                      {"seed", c.seed},
                      {"fold", c.fold},
                      {"k", c.k},
                      {"augment", c.augment},
                      {"geometry", to_json(c.geometry)},
                      {"augmentation", to_json(c.augmentation)},
                      {"cnn_model", {{"extra_pool", to_string(c.cnn.extra_pool)}}},
                      {"fcn_model", to_json(c.fcn)},
                      {"pixel_weights", {{"positive", c.pixel_weights.positive}, {"negative", c.pixel_weights.negative}}},
                      {"out_dir", c.out_dir.string()}};
  if (c.cnn.pretrained) j["cnn_model"]["pretrained"] = c.cnn.pretrained->string();
  j["init_checkpoint"] = c.init_checkpoint ? nlohmann::json(c.init_checkpoint->string()) : nlohmann::json(nullptr);
  return j;
}

void apply_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  apply_flat(c, j);
  const auto section = to_string(c.method);
  if (j.contains(section)) apply_flat(c, j[section]);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
}

TrainConfig load_train_config(Method m, const std::filesystem::path& file) {
  TrainConfig c = TrainConfig::defaults(m);
  if (!file.empty()) apply_json(c, read_json_file(file));
  return c;
}

}  // namespace ptx
