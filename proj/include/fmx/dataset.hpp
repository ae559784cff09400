#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmx/common.hpp"
#include "fmx/scene.hpp"

namespace fmx::data {

enum class Split { train, val, test, unlabeled };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct ManifestEntry {
  std::string scene_id;
  std::string path;  // base path without extension
  double h_amb_m = 0.0;
  scene::OrbitDir orbit_dir = scene::OrbitDir::ascending;
  int year = 0;
  double forest_fraction = 0.0;
  long n_pixels = 0;
  Split split = Split::train;
};

struct ChannelStats {
  std::array<double, 5> mean{};
  std::array<double, 5> stddev{};
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::optional<ChannelStats> channel_stats;

  std::vector<const ManifestEntry*> with_split(Split s) const;
};

struct SplitPolicy {
  double train = 0.6, val = 0.2, test = 0.2;  // remainder becomes unlabeled
  std::uint64_t seed = 0;
};

Manifest build_manifest(const std::vector<std::string>& scene_paths, const SplitPolicy& policy);

void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

// True iff min_frac <= forest_fraction <= 1 - min_frac (inclusive).
bool balance_filter(const ManifestEntry& e, double min_frac = 0.25);

// Per half-open h_amb bin [k*w, (k+1)*w): keeps at most train_cap entries of
// the training pool (train + unlabeled) and val_cap validation entries.
// Test entries pass through untouched.
Manifest stratified_select(const Manifest& m, double bin_width_m = 2.0, int train_cap = 20,
                           int val_cap = 10, std::uint64_t seed = 0);

// Keeps whole train scenes until the labeled-area fraction reaches the target
// (+-1 scene), chosen by greedy farthest-point traversal over h_amb.
Manifest label_fraction_subset(const Manifest& m, double fraction);

struct Patch {
  static constexpr int kSize = 128;
  static constexpr int kChannels = 5;
  std::vector<float> features;  // CHW, 5 x 128 x 128
  Raster<std::uint8_t> label;   // empty when the source scene has no labels
  Raster<std::uint8_t> valid;
  bool has_label = false;
  std::string scene_id;
  int offset_r = 0, offset_c = 0;
  double h_amb_m = 0.0;
};

// Tiles the scene at the given stride; patches with invalid fraction > 0.10
// are dropped.
std::vector<Patch> extract_patches(const scene::InSARScene& s, int size = Patch::kSize,
                                   int stride = Patch::kSize);

ChannelStats compute_stats(const std::vector<Patch>& train_patches);

// Per band (x - mean) / std on valid pixels; invalid pixels become exactly 0.
void normalize(Patch& p, const ChannelStats& stats);

// factor x factor majority vote; ties become forest. Trailing rows/cols that
// do not fill a block are cropped.
Raster<std::uint8_t> downsample_majority(const Raster<std::uint8_t>& label, int factor = 6);

// label = 1 iff chm > threshold (strict).
Raster<std::uint8_t> chm_to_fnf(const Raster<float>& chm_m, double threshold_m = 4.0);

}  // namespace fmx::data
