#pragma once

#include <array>
#include <string>
#include <vector>

#include "fmx/common.hpp"
#include "fmx/dataset.hpp"
#include "fmx/models.hpp"
#include "fmx/scene.hpp"

namespace fmx::eval {

inline constexpr double kDecisionThreshold = 0.5;

struct ConfusionCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  std::string scope;

  long long total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct MetricsReport {
  std::string bucket_id;
  long long n_pixels = 0;
  double oa = 0;
  double precision_f = 0, recall_f = 0, f1_f = 0;
  double precision_nf = 0, recall_nf = 0, f1_nf = 0;
  double f1w = 0;
  double w_forest = 0, w_nonforest = 0;  // reference class shares
  bool degenerate_forest = false, degenerate_nonforest = false;
};

// Binarizes pred at the threshold (>= means forest) and tallies valid pixels.
ConfusionCounts confusion(const Raster<float>& pred_prob, const Raster<std::uint8_t>& label,
                          const Raster<std::uint8_t>& valid,
                          double threshold = kDecisionThreshold);

MetricsReport metrics(const ConfusionCounts& counts);

double weighted_f1(double f1_forest, double w_forest, double f1_nonforest, double w_nonforest);

// Exact arithmetic mean; replicate aggregation.
double mean_of(const std::vector<double>& xs);

inline const std::array<const char*, 4> kBucketIds = {"short", "mid", "large",
                                                      "desc-2013-analog"};

// Ascending scenes fall into short (< 40 m), mid ([40, 60] m) or large
// (> 60 m); descending scenes form the held-out-geometry analog bucket.
std::string bucket_of(double h_amb_m, scene::OrbitDir orbit_dir);

// Full-scene forest probability via 128 px tiling (tail tiles overlap-write).
Raster<float> predict_scene(models::UNet& model, const scene::InSARScene& s,
                            const data::ChannelStats& stats);

struct EvalResult {
  std::vector<MetricsReport> buckets;  // fixed kBucketIds order, empty buckets included
  std::vector<ConfusionCounts> scenes;  // scope = scene_id
};

EvalResult bucket_evaluate(const ModelParams& params, const models::EncoderSchema& schema,
                           const data::Manifest& manifest);
EvalResult bucket_evaluate(const std::string& checkpoint_path, const data::Manifest& manifest);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kColorTp{34, 139, 34};     // forest hit
inline constexpr Rgb kColorTn{255, 255, 255};   // non-forest hit
inline constexpr Rgb kColorFp{220, 20, 60};     // forest overcall
inline constexpr Rgb kColorFn{255, 200, 0};     // forest miss
inline constexpr Rgb kColorInvalid{128, 128, 128};

Raster<Rgb> render_confusion_map(const Raster<float>& pred_prob,
                                 const Raster<std::uint8_t>& label,
                                 const Raster<std::uint8_t>& valid,
                                 double threshold = kDecisionThreshold);

void write_ppm(const std::string& path, const Raster<Rgb>& img);
// Legend plus the per-color pixel tallies.
void write_confusion_sidecar(const std::string& path, const Raster<Rgb>& img);

struct PlacedPrediction {
  long origin_r = 0, origin_c = 0;
  Raster<float> prob;
  Raster<std::uint8_t> valid;
};

struct MosaicResult {
  Raster<float> prob;            // mean probability in overlaps
  Raster<std::uint8_t> covered;  // 0 = nodata
};

MosaicResult mosaic(const std::vector<PlacedPrediction>& scenes);

// Binary map with a metric extent, for cross-resolution intercomparison.
struct GeoMap {
  std::string id;
  double origin_r_m = 0, origin_c_m = 0;
  double res_m = 6.0;
  Raster<std::uint8_t> label;
  Raster<std::uint8_t> valid;
};

void write_geomap(const std::string& path_base, const GeoMap& m);
GeoMap read_geomap(const std::string& path_base);

struct IntercompareReport {
  MetricsReport overall;
  int n_maps = 0;
  int n_maps_gt5 = 0, n_maps_gt10 = 0;
  double f1_nf_gt5 = 0, f1_nf_gt10 = 0;
  std::vector<std::pair<std::string, MetricsReport>> per_map;
};

// Resamples each prediction map onto the reference grid by majority vote
// (ties -> forest) and compares on the overlap. Non-forest F1 is additionally
// reported over maps whose reference non-forest share exceeds 5 % and 10 %.
IntercompareReport intercompare(const std::vector<GeoMap>& predictions, const GeoMap& reference);

}  // namespace fmx::eval
