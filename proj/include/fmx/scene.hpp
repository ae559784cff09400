#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmx/common.hpp"

namespace fmx::scene {

enum class OrbitDir { ascending, descending };

const char* orbit_name(OrbitDir d);
OrbitDir orbit_from_name(const std::string& s);

struct SceneGeometry {
  double lambda_m = 0.0311;     // radar wavelength
  double slant_range_m = 614000.0;
  double eta_deg = 40.0;        // acquisition incidence angle
  double b_perp_m = 250.0;      // perpendicular baseline
  OrbitDir orbit_dir = OrbitDir::ascending;
  int year = 2011;
};

// Height of ambiguity, lambda * r * sin(eta) / b_perp.
double compute_hamb(const SceneGeometry& geom);

struct SynthParams {
  int size_px = 256;
  double forest_fraction_target = 0.55;
  double smoothing_scale_px = 10.0;
  int n_roads = 3;
  int road_width_px = 2;
  int n_clearcuts = 4;
  int clearcut_diameter_px = 5;  // 30 m at 6 m spacing
  double speckle_looks = 4.0;
  double beta0_forest_mean = 0.25;
  double beta0_ground_mean = 0.08;
  double canopy_height_m = 28.0;
  double snr_coh = 0.95;
  double quant_coh = 0.98;
  double amb_coh = 0.99;
  std::uint64_t seed = 1;

  void validate() const;
};

struct InSARScene {
  Raster<float> beta0, gamma_tot, gamma_vol, theta_i, h_amb;
  Raster<std::uint8_t> valid, label;
  SceneGeometry geometry;
  std::string scene_id;
  std::uint64_t seed = 0;
  // placement in a shared mosaic grid (pixels)
  long origin_r_px = 0, origin_c_px = 0;

  double forest_fraction() const;
};

// Elementwise product of coherence factors; every factor must lie in [0, 1].
Raster<float> compose_coherence(const std::vector<const Raster<float>*>& factors);

// |sinc(h_v / h_amb)| clamped to [0, 1]; exactly 1 where h_v == 0.
Raster<float> volume_decorrelation(const Raster<float>& canopy_height_m,
                                   const Raster<float>& h_amb);

// Thresholded smoothed random field hitting forest_fraction_target +-0.05
// after roads and clearcuts are carved out.
Raster<std::uint8_t> generate_truth(const SynthParams& params);

InSARScene simulate_scene(const SynthParams& params, const SceneGeometry& geom,
                          const std::string& scene_id);

// Band-sequential float32 little-endian container plus a key-value sidecar.
// Bands: beta0, gamma_tot, gamma_vol, theta_i, h_amb, valid, label.
void write_scene(const std::string& path_base, const InSARScene& s);
InSARScene read_scene(const std::string& path_base);  // path without .bin/.meta suffix

// Sidecar-only read used by manifest building.
struct SceneHeader {
  std::string scene_id;
  int rows = 0, cols = 0;
  SceneGeometry geometry;
  double h_amb_m = 0.0;
  double forest_fraction = 0.0;
  std::uint64_t seed = 0;
  long origin_r_px = 0, origin_c_px = 0;
};
SceneHeader read_scene_header(const std::string& path_base);

}  // namespace fmx::scene
