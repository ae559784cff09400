#include "fmx/params.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fmx/common.hpp"

namespace fmx {

using nlohmann::json;

int ModelParams::add(const std::string& key, std::vector<int> shape, bool trainable,
                     bool is_buffer) {
  if (index.count(key)) throw ValidationError("duplicate parameter key: " + key);
  ParamEntry e;
  e.key = key;
  e.shape = std::move(shape);
  e.trainable = trainable && !is_buffer;
  e.is_buffer = is_buffer;
  e.value.assign(e.count(), 0.0f);
  if (!is_buffer) e.grad.assign(e.count(), 0.0f);
  entries.push_back(std::move(e));
  index[key] = static_cast<int>(entries.size()) - 1;
  return index[key];
}

int ModelParams::find(const std::string& key) const {
  auto it = index.find(key);
  return it == index.end() ? -1 : it->second;
}

ParamEntry& ModelParams::at(const std::string& key) {
  int i = find(key);
  if (i < 0) throw ValidationError("unknown parameter key: " + key);
  return entries[i];
}

const ParamEntry& ModelParams::at(const std::string& key) const {
  int i = find(key);
  if (i < 0) throw ValidationError("unknown parameter key: " + key);
  return entries[i];
}

void ModelParams::zero_grad() {
  for (auto& e : entries)
    if (!e.is_buffer) std::fill(e.grad.begin(), e.grad.end(), 0.0f);
}

namespace {
constexpr char kMagic[8] = {'F', 'M', 'X', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& schema_json) {
  json hdr;
  hdr["schema"] = json::parse(schema_json);
  hdr["schema_hash"] = params.schema_hash;
  hdr["seed"] = params.seed;
  hdr["task"] = params.task_tag;
  hdr["config_digest"] = params.config_digest;
  json arr = json::array();
  for (const auto& e : params.entries) {
    arr.push_back({{"key", e.key},
                   {"shape", e.shape},
                   {"trainable", e.trainable},
                   {"buffer", e.is_buffer}});
  }
  hdr["entries"] = arr;
  const std::string h = hdr.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  const std::uint64_t hlen = h.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& e : params.entries)
    f.write(reinterpret_cast<const char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  if (!f) throw DataError("short write on checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path, const std::string& expected_schema_hash,
                            std::string* schema_json_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string h(hlen, '\0');
  f.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError("truncated checkpoint header: " + path);
  json hdr = json::parse(h, nullptr, false);
  if (hdr.is_discarded()) throw DataError("corrupt checkpoint header: " + path);

  ModelParams p;
  p.schema_hash = hdr.at("schema_hash").get<std::string>();
  p.seed = hdr.at("seed").get<std::uint64_t>();
  p.task_tag = hdr.at("task").get<std::string>();
  p.config_digest = hdr.at("config_digest").get<std::string>();
  if (!expected_schema_hash.empty() && p.schema_hash != expected_schema_hash)
    throw ValidationError("checkpoint schema hash mismatch: expected " + expected_schema_hash +
                          ", file has " + p.schema_hash);
  if (schema_json_out) *schema_json_out = hdr.at("schema").dump();

  for (const auto& je : hdr.at("entries")) {
    const int idx = p.add(je.at("key").get<std::string>(), je.at("shape").get<std::vector<int>>(),
                          je.at("trainable").get<bool>(), je.at("buffer").get<bool>());
    auto& e = p.entries[idx];
    e.trainable = je.at("trainable").get<bool>() && !e.is_buffer;
    f.read(reinterpret_cast<char*>(e.value.data()),
           static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
  if (!f) throw DataError("truncated checkpoint payload: " + path);
  return p;
}

}  // namespace fmx
