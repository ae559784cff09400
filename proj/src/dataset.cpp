#include "fmx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace fmx::data {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unlabeled: return "unlabeled";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unlabeled") return Split::unlabeled;
  throw DataError("unknown split: " + s);
}

std::vector<const ManifestEntry*> Manifest::with_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

Manifest build_manifest(const std::vector<std::string>& scene_paths, const SplitPolicy& policy) {
  Manifest m;
  std::set<std::string> seen;
  for (const auto& p : scene_paths) {
    const auto h = scene::read_scene_header(p);
    if (!seen.insert(h.scene_id).second)
      throw DataError("duplicate scene_id in manifest input: " + h.scene_id);
    ManifestEntry e;
    e.scene_id = h.scene_id;
    e.path = p;
    e.h_amb_m = h.h_amb_m;
    e.orbit_dir = h.geometry.orbit_dir;
    e.year = h.geometry.year;
    e.forest_fraction = h.forest_fraction;
    e.n_pixels = static_cast<long>(h.rows) * h.cols;
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) return m;

  if (policy.train < 0 || policy.val < 0 || policy.test < 0 ||
      policy.train + policy.val + policy.test > 1.0 + 1e-9)
    throw ConfigError("split policy fractions must be nonnegative and sum to at most 1");

  // Largest-remainder apportionment so that e.g. 60/20/20 over 10 scenes is
  // exactly 6/2/2; the remainder becomes unlabeled.
  const int n = static_cast<int>(m.entries.size());
  const double fr[3] = {policy.train, policy.val, policy.test};
  int counts[3];
  double rem[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double want = fr[i] * n;
    counts[i] = static_cast<int>(std::floor(want + 1e-9));
    rem[i] = want - counts[i];
    assigned += counts[i];
  }
  const int target = std::min<int>(n, static_cast<int>(std::llround((fr[0] + fr[1] + fr[2]) * n)));
  while (assigned < target) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(policy.seed);
  rng.derive("split").shuffle(order);
  int k = 0;
  for (int i = 0; i < counts[0]; ++i) m.entries[order[k++]].split = Split::train;
  for (int i = 0; i < counts[1]; ++i) m.entries[order[k++]].split = Split::val;
  for (int i = 0; i < counts[2]; ++i) m.entries[order[k++]].split = Split::test;
  while (k < n) m.entries[order[k++]].split = Split::unlabeled;
  return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"scene_id", e.scene_id},
                            {"path", e.path},
                            {"h_amb_m", e.h_amb_m},
                            {"orbit_dir", scene::orbit_name(e.orbit_dir)},
                            {"year", e.year},
                            {"forest_fraction", e.forest_fraction},
                            {"n_pixels", e.n_pixels},
                            {"split", split_name(e.split)}});
  }
  if (m.channel_stats) {
    j["channel_stats"] = {{"mean", m.channel_stats->mean}, {"stddev", m.channel_stats->stddev}};
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read manifest: " + path);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw DataError("corrupt manifest: " + path);
  Manifest m;
  std::set<std::string> seen;
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.scene_id = je.at("scene_id").get<std::string>();
    if (!seen.insert(e.scene_id).second)
      throw DataError("duplicate scene_id in manifest: " + e.scene_id);
    e.path = je.at("path").get<std::string>();
    e.h_amb_m = je.at("h_amb_m").get<double>();
    e.orbit_dir = scene::orbit_from_name(je.at("orbit_dir").get<std::string>());
    e.year = je.at("year").get<int>();
    e.forest_fraction = je.at("forest_fraction").get<double>();
    e.n_pixels = je.at("n_pixels").get<long>();
    e.split = split_from_name(je.at("split").get<std::string>());
    m.entries.push_back(std::move(e));
  }
  if (j.count("channel_stats")) {
    ChannelStats cs;
    cs.mean = j["channel_stats"].at("mean").get<std::array<double, 5>>();
    cs.stddev = j["channel_stats"].at("stddev").get<std::array<double, 5>>();
    m.channel_stats = cs;
  }
  return m;
}

bool balance_filter(const ManifestEntry& e, double min_frac) {
  return e.forest_fraction >= min_frac && e.forest_fraction <= 1.0 - min_frac;
}

Manifest stratified_select(const Manifest& m, double bin_width_m, int train_cap, int val_cap,
                           std::uint64_t seed) {
  if (bin_width_m <= 0.0) throw ConfigError("bin width must be positive");
  // bin id -> entry indices, in manifest order
  std::map<long, std::vector<int>> train_bins, val_bins;
  for (int i = 0; i < static_cast<int>(m.entries.size()); ++i) {
    const auto& e = m.entries[i];
    const long bin = static_cast<long>(std::floor(e.h_amb_m / bin_width_m));
    if (e.split == Split::train || e.split == Split::unlabeled)
      train_bins[bin].push_back(i);
    else if (e.split == Split::val)
      val_bins[bin].push_back(i);
  }

  std::set<int> keep;
  Rng rng(seed);
  auto cap_bins = [&](std::map<long, std::vector<int>>& bins, int cap, const char* tag) {
    for (auto& [bin, idxs] : bins) {
      if (static_cast<int>(idxs.size()) > cap) {
        auto shuffled = idxs;
        rng.derive(tag, static_cast<std::uint64_t>(bin)).shuffle(shuffled);
        shuffled.resize(cap);
        keep.insert(shuffled.begin(), shuffled.end());
      } else {
        keep.insert(idxs.begin(), idxs.end());
      }
    }
  };
  cap_bins(train_bins, train_cap, "strat-train");
  cap_bins(val_bins, val_cap, "strat-val");

  Manifest out;
  out.channel_stats = m.channel_stats;
  for (int i = 0; i < static_cast<int>(m.entries.size()); ++i) {
    const auto& e = m.entries[i];
    if (e.split == Split::test || keep.count(i)) out.entries.push_back(e);
  }
  return out;
}

Manifest label_fraction_subset(const Manifest& m, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("label fraction must lie in (0, 1]");
  std::vector<int> train_idx;
  for (int i = 0; i < static_cast<int>(m.entries.size()); ++i)
    if (m.entries[i].split == Split::train) train_idx.push_back(i);
  if (train_idx.empty()) throw ConfigError("label_fraction_subset: train split is empty");

  std::set<int> selected;
  if (fraction >= 1.0) {
    selected.insert(train_idx.begin(), train_idx.end());
  } else {
    double total_area = 0.0;
    for (int i : train_idx) total_area += static_cast<double>(m.entries[i].n_pixels);

    auto hamb = [&](int i) { return m.entries[i].h_amb_m; };
    std::vector<int> remaining = train_idx;
    std::vector<int> picked;

    auto pick = [&](auto better) {
      int best = remaining.front();
      for (int i : remaining)
        if (better(i, best)) best = i;
      picked.push_back(best);
      remaining.erase(std::find(remaining.begin(), remaining.end(), best));
      return best;
    };

    double area = 0.0;
    double prev_err = std::abs(0.0 - fraction);
    while (!remaining.empty() && area / total_area < fraction) {
      int chosen;
      if (picked.empty()) {
        chosen = pick([&](int a, int b) { return hamb(a) < hamb(b); });
      } else if (picked.size() == 1) {
        chosen = pick([&](int a, int b) { return hamb(a) > hamb(b); });
      } else {
        auto dist = [&](int i) {
          double d = std::numeric_limits<double>::max();
          for (int s : picked) d = std::min(d, std::abs(hamb(i) - hamb(s)));
          return d;
        };
        chosen = pick([&](int a, int b) { return dist(a) > dist(b); });
      }
      prev_err = std::abs(area / total_area - fraction);
      area += static_cast<double>(m.entries[chosen].n_pixels);
    }
    // +-1 scene: drop the last pick if stopping one earlier was strictly closer
    if (picked.size() > 1 && prev_err < std::abs(area / total_area - fraction))
      picked.pop_back();
    selected.insert(picked.begin(), picked.end());
  }

  Manifest out;
  out.channel_stats = m.channel_stats;
  for (int i = 0; i < static_cast<int>(m.entries.size()); ++i) {
    const auto& e = m.entries[i];
    if (e.split != Split::train || selected.count(i)) out.entries.push_back(e);
  }
  return out;
}

std::vector<Patch> extract_patches(const scene::InSARScene& s, int size, int stride) {
  const int rows = s.beta0.rows, cols = s.beta0.cols;
  if (rows < size || cols < size)
    throw DataError("scene " + s.scene_id + " smaller than patch size");
  if (stride <= 0) throw ConfigError("stride must be positive");

  const Raster<float>* bands[Patch::kChannels] = {&s.beta0, &s.gamma_tot, &s.gamma_vol,
                                                  &s.theta_i, &s.h_amb};
  const bool has_label = s.label.size() > 0;
  std::vector<Patch> out;
  for (int r0 = 0; r0 + size <= rows; r0 += stride) {
    for (int c0 = 0; c0 + size <= cols; c0 += stride) {
      long invalid = 0;
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          if (!s.valid(r0 + r, c0 + c)) ++invalid;
      const long npx = static_cast<long>(size) * size;
      if (invalid * 10 > npx) continue;  // invalid fraction > 0.10

      Patch p;
      p.scene_id = s.scene_id;
      p.offset_r = r0;
      p.offset_c = c0;
      p.h_amb_m = s.h_amb(r0, c0);
      p.features.assign(static_cast<size_t>(Patch::kChannels) * size * size, 0.0f);
      for (int b = 0; b < Patch::kChannels; ++b)
        for (int r = 0; r < size; ++r)
          for (int c = 0; c < size; ++c)
            p.features[(static_cast<size_t>(b) * size + r) * size + c] = (*bands[b])(r0 + r, c0 + c);
      p.valid = Raster<std::uint8_t>(size, size);
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) p.valid(r, c) = s.valid(r0 + r, c0 + c);
      p.has_label = has_label;
      if (has_label) {
        p.label = Raster<std::uint8_t>(size, size);
        for (int r = 0; r < size; ++r)
          for (int c = 0; c < size; ++c) p.label(r, c) = s.label(r0 + r, c0 + c);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

ChannelStats compute_stats(const std::vector<Patch>& train_patches) {
  double sum[Patch::kChannels] = {0};
  double sumsq[Patch::kChannels] = {0};
  long count = 0;
  for (const auto& p : train_patches) {
    const int size = p.valid.rows;
    for (int b = 0; b < Patch::kChannels; ++b) {
      const float* band = p.features.data() + static_cast<size_t>(b) * size * size;
      for (long i = 0; i < static_cast<long>(size) * size; ++i) {
        if (!p.valid.v[i]) continue;
        sum[b] += band[i];
        sumsq[b] += static_cast<double>(band[i]) * band[i];
      }
    }
    for (long i = 0; i < static_cast<long>(size) * size; ++i)
      if (p.valid.v[i]) ++count;
  }
  if (count == 0) throw DataError("compute_stats: no valid pixels");
  ChannelStats cs;
  for (int b = 0; b < Patch::kChannels; ++b) {
    cs.mean[b] = sum[b] / static_cast<double>(count);
    const double var = sumsq[b] / static_cast<double>(count) - cs.mean[b] * cs.mean[b];
    cs.stddev[b] = std::sqrt(std::max(0.0, var));
    if (!(cs.stddev[b] > 0.0))
      throw ValidationError("compute_stats: zero standard deviation in band " + std::to_string(b));
  }
  return cs;
}

void normalize(Patch& p, const ChannelStats& stats) {
  const int size = p.valid.rows;
  const long plane = static_cast<long>(size) * size;
  for (int b = 0; b < Patch::kChannels; ++b) {
    float* band = p.features.data() + static_cast<size_t>(b) * plane;
    const float mean = static_cast<float>(stats.mean[b]);
    const float inv = static_cast<float>(1.0 / stats.stddev[b]);
    for (long i = 0; i < plane; ++i)
      band[i] = p.valid.v[i] ? (band[i] - mean) * inv : 0.0f;
  }
}

Raster<std::uint8_t> downsample_majority(const Raster<std::uint8_t>& label, int factor) {
  if (factor <= 0) throw ConfigError("downsample factor must be positive");
  const int rows = label.rows / factor, cols = label.cols / factor;
  Raster<std::uint8_t> out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int forest = 0;
      for (int i = 0; i < factor; ++i)
        for (int j = 0; j < factor; ++j) forest += label(r * factor + i, c * factor + j);
      out(r, c) = (2 * forest >= factor * factor) ? 1 : 0;  // ties -> forest
    }
  return out;
}

Raster<std::uint8_t> chm_to_fnf(const Raster<float>& chm_m, double threshold_m) {
  Raster<std::uint8_t> out(chm_m.rows, chm_m.cols);
  for (size_t i = 0; i < chm_m.v.size(); ++i) {
    if (chm_m.v[i] < 0.0f) throw ValidationError("chm_to_fnf: negative canopy height");
    out.v[i] = chm_m.v[i] > threshold_m ? 1 : 0;
  }
  return out;
}

}  // namespace fmx::data
