#include "fmx/config.hpp"

#include <fstream>

#include "fmx/common.hpp"

namespace fmx::config {

using nlohmann::json;

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key.path=value: " + ov);
    const std::string keypath = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string

    json* node = &j;
    size_t start = 0;
    while (true) {
      const auto dot = keypath.find('.', start);
      const std::string part = keypath.substr(start, dot - start);
      if (part.empty()) throw ConfigError("bad override key: " + keypath);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return j;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config: " + path);
    j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  }
  return apply_overrides(std::move(j), overrides);
}

void check_known_keys(const json& section, const std::vector<std::string>& known,
                      const std::string& where) {
  if (!section.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : section.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

train::ExperimentConfig experiment_from_json(const json& j) {
  check_known_keys(j, {"task", "init_checkpoint", "trainability", "label_fraction", "epochs",
                       "batch_size", "learning_rate", "seed", "manifest", "out_dir", "model",
                       "patch_stride", "early_stop_patience"},
                   "experiment");
  train::ExperimentConfig c;
  c.task = j.at("task").get<std::string>();
  if (j.count("init_checkpoint")) c.init_checkpoint = j["init_checkpoint"].get<std::string>();
  if (j.count("trainability")) c.trainability = j["trainability"].get<std::string>();
  if (j.count("label_fraction")) c.label_fraction = j["label_fraction"].get<double>();
  if (j.count("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.count("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.count("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.count("seed")) c.seed = j["seed"].get<std::uint64_t>();
  c.manifest_path = j.at("manifest").get<std::string>();
  if (j.count("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.count("model")) {
    const auto& m = j["model"];
    check_known_keys(m, {"in_channels", "base_filters", "n_levels"}, "experiment.model");
    if (m.count("in_channels")) c.model.in_channels = m["in_channels"].get<int>();
    if (m.count("base_filters")) c.model.base_filters = m["base_filters"].get<int>();
    if (m.count("n_levels")) c.model.n_levels = m["n_levels"].get<int>();
  }
  if (j.count("patch_stride")) c.patch_stride = j["patch_stride"].get<int>();
  if (j.count("early_stop_patience")) c.early_stop_patience = j["early_stop_patience"].get<int>();
  return c;
}

json experiment_to_json(const train::ExperimentConfig& c) {
  return json{{"task", c.task},
              {"init_checkpoint", c.init_checkpoint},
              {"trainability", c.trainability},
              {"label_fraction", c.label_fraction},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"manifest", c.manifest_path},
              {"out_dir", c.out_dir},
              {"model",
               {{"in_channels", c.model.in_channels},
                {"base_filters", c.model.base_filters},
                {"n_levels", c.model.n_levels}}},
              {"patch_stride", c.patch_stride},
              {"early_stop_patience", c.early_stop_patience}};
}

std::string digest(const json& j) { return to_hex(fnv1a64(j.dump())); }

}  // namespace fmx::config
