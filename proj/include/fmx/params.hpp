#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fmx {

struct ParamEntry {
  std::string key;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty for buffers
  bool trainable = true;
  bool is_buffer = false;  // running statistics and the like; saved, never optimized

  long count() const {
    long c = 1;
    for (int d : shape) c *= d;
    return c;
  }
};

// Named parameter collection shared by the model graph, the optimizer and the
// checkpoint codec. Entry order is fixed at creation time and is the
// deterministic iteration order everywhere.
struct ModelParams {
  std::string schema_hash;
  std::uint64_t seed = 0;
  std::string task_tag;       // ssl-id | ssl-in | fsl | dst
  std::string config_digest;  // digest of the producing run's config

  std::vector<ParamEntry> entries;
  std::unordered_map<std::string, int> index;

  int add(const std::string& key, std::vector<int> shape, bool trainable, bool is_buffer = false);
  int find(const std::string& key) const;  // -1 when absent
  ParamEntry& at(const std::string& key);
  const ParamEntry& at(const std::string& key) const;

  void zero_grad();
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& schema_json);
// expected_schema_hash empty = accept any.
ModelParams load_checkpoint(const std::string& path, const std::string& expected_schema_hash,
                            std::string* schema_json_out = nullptr);

}  // namespace fmx
