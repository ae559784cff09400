#include "fmx/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace fmx::scene {

static_assert(std::endian::native == std::endian::little,
              "scene container assumes a little-endian host");

const char* orbit_name(OrbitDir d) { return d == OrbitDir::ascending ? "ascending" : "descending"; }

OrbitDir orbit_from_name(const std::string& s) {
  if (s == "ascending") return OrbitDir::ascending;
  if (s == "descending") return OrbitDir::descending;
  throw DataError("unknown orbit direction: " + s);
}

double compute_hamb(const SceneGeometry& g) {
  if (g.lambda_m <= 0.0) throw ValidationError("lambda_m must be positive");
  if (g.slant_range_m <= 0.0) throw ValidationError("slant_range_m must be positive");
  if (g.eta_deg <= 0.0 || g.eta_deg >= 90.0)
    throw ValidationError("eta_deg must lie in (0, 90)");
  if (g.b_perp_m <= 0.0) throw ValidationError("b_perp_m must be positive");
  const double eta_rad = g.eta_deg * std::numbers::pi / 180.0;
  const double h = g.lambda_m * g.slant_range_m * std::sin(eta_rad) / g.b_perp_m;
  if (!std::isfinite(h) || h <= 0.0) throw ValidationError("derived h_amb is not finite positive");
  return h;
}

void SynthParams::validate() const {
  if (size_px < 8) throw ConfigError("size_px too small");
  if (forest_fraction_target < 0.0 || forest_fraction_target > 1.0)
    throw ConfigError("forest_fraction_target outside [0,1]");
  if (clearcut_diameter_px < 3) throw ConfigError("clearcut_diameter_px must be >= 3");
  if (speckle_looks < 1.0) throw ConfigError("speckle_looks must be >= 1");
  for (double f : {snr_coh, quant_coh, amb_coh})
    if (f <= 0.0 || f > 1.0) throw ConfigError("coherence factors must lie in (0,1]");
  if (beta0_forest_mean < 0.0 || beta0_ground_mean < 0.0)
    throw ConfigError("backscatter means must be nonnegative");
  if (canopy_height_m < 0.0) throw ConfigError("canopy_height_m must be nonnegative");
}

double InSARScene::forest_fraction() const {
  if (label.size() == 0) return 0.0;
  long f = 0;
  for (auto b : label.v) f += b;
  return static_cast<double>(f) / static_cast<double>(label.size());
}

Raster<float> compose_coherence(const std::vector<const Raster<float>*>& factors) {
  if (factors.empty()) throw ValidationError("compose_coherence: no factors");
  const auto& first = *factors.front();
  Raster<float> out(first.rows, first.cols, 1.0f);
  for (const auto* f : factors) {
    if (!f->same_shape(first)) throw ValidationError("compose_coherence: shape mismatch");
    for (size_t i = 0; i < out.v.size(); ++i) {
      const float x = f->v[i];
      if (x < 0.0f || x > 1.0f)
        throw ValidationError("compose_coherence: factor outside [0,1]");
      out.v[i] *= x;
    }
  }
  return out;
}

Raster<float> volume_decorrelation(const Raster<float>& canopy_height_m,
                                   const Raster<float>& h_amb) {
  if (!canopy_height_m.same_shape(h_amb))
    throw ValidationError("volume_decorrelation: shape mismatch");
  Raster<float> out(canopy_height_m.rows, canopy_height_m.cols);
  for (size_t i = 0; i < out.v.size(); ++i) {
    const double hv = canopy_height_m.v[i];
    const double ha = h_amb.v[i];
    if (ha <= 0.0) throw ValidationError("volume_decorrelation: h_amb must be positive");
    if (hv < 0.0) throw ValidationError("volume_decorrelation: canopy height must be >= 0");
    if (hv == 0.0) {
      out.v[i] = 1.0f;
      continue;
    }
    const double x = hv / ha;
    const double s = std::abs(std::sin(std::numbers::pi * x) / (std::numbers::pi * x));
    out.v[i] = static_cast<float>(std::clamp(s, 0.0, 1.0));
  }
  return out;
}

namespace {

// Separable Gaussian blur with reflected borders.
Raster<float> gaussian_blur(const Raster<float>& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    s += v;
  }
  for (auto& v : k) v = static_cast<float>(v / s);

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };

  Raster<float> tmp(in.rows, in.cols), out(in.rows, in.cols);
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in(r, reflect(c + i, in.cols));
      tmp(r, c) = acc;
    }
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(reflect(r + i, in.rows), c);
      out(r, c) = acc;
    }
  return out;
}

Raster<float> smooth_noise(int size, double sigma, Rng rng) {
  Raster<float> f(size, size);
  for (auto& v : f.v) v = static_cast<float>(rng.normal());
  return gaussian_blur(f, sigma);
}

void carve_disc(Raster<std::uint8_t>& carve, double cy, double cx, double radius) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int r1 = std::min(carve.rows - 1, static_cast<int>(std::ceil(cy + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int c1 = std::min(carve.cols - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double dy = r - cy, dx = c - cx;
      if (dy * dy + dx * dx <= radius * radius) carve(r, c) = 1;
    }
}

void carve_segment(Raster<std::uint8_t>& carve, double r0, double c0, double r1, double c1,
                   double half_width) {
  const double dr = r1 - r0, dc = c1 - c0;
  const double len2 = dr * dr + dc * dc;
  const int rlo = std::max(0, static_cast<int>(std::floor(std::min(r0, r1) - half_width - 1)));
  const int rhi = std::min(carve.rows - 1, static_cast<int>(std::ceil(std::max(r0, r1) + half_width + 1)));
  const int clo = std::max(0, static_cast<int>(std::floor(std::min(c0, c1) - half_width - 1)));
  const int chi = std::min(carve.cols - 1, static_cast<int>(std::ceil(std::max(c0, c1) + half_width + 1)));
  for (int r = rlo; r <= rhi; ++r)
    for (int c = clo; c <= chi; ++c) {
      double t = len2 > 0.0 ? ((r - r0) * dr + (c - c0) * dc) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double pr = r0 + t * dr, pc = c0 + t * dc;
      const double dy = r - pr, dx = c - pc;
      if (dy * dy + dx * dx <= half_width * half_width) carve(r, c) = 1;
    }
}

Raster<std::uint8_t> build_carve_mask(const SynthParams& p, Rng base) {
  Raster<std::uint8_t> carve(p.size_px, p.size_px, 0);
  const double n = p.size_px;

  Rng roads = base.derive("roads");
  for (int i = 0; i < p.n_roads; ++i) {
    // polyline crossing the scene: endpoints on opposite borders, two waypoints
    const bool horizontal = roads.uniform() < 0.5;
    double pts[4][2];
    if (horizontal) {
      pts[0][0] = roads.uniform(0, n - 1);
      pts[0][1] = 0;
      pts[3][0] = roads.uniform(0, n - 1);
      pts[3][1] = n - 1;
    } else {
      pts[0][0] = 0;
      pts[0][1] = roads.uniform(0, n - 1);
      pts[3][0] = n - 1;
      pts[3][1] = roads.uniform(0, n - 1);
    }
    for (int w = 1; w <= 2; ++w) {
      const double t = w / 3.0;
      pts[w][0] = pts[0][0] + t * (pts[3][0] - pts[0][0]) + roads.uniform(-n / 8, n / 8);
      pts[w][1] = pts[0][1] + t * (pts[3][1] - pts[0][1]) + roads.uniform(-n / 8, n / 8);
    }
    for (int s = 0; s < 3; ++s)
      carve_segment(carve, pts[s][0], pts[s][1], pts[s + 1][0], pts[s + 1][1],
                    p.road_width_px / 2.0);
  }

  Rng cuts = base.derive("clearcuts");
  for (int i = 0; i < p.n_clearcuts; ++i) {
    const double cy = cuts.uniform(0, n - 1);
    const double cx = cuts.uniform(0, n - 1);
    carve_disc(carve, cy, cx, p.clearcut_diameter_px / 2.0);
  }
  return carve;
}

}  // namespace

Raster<std::uint8_t> generate_truth(const SynthParams& p) {
  p.validate();
  Rng base(p.seed);
  const Raster<float> field = smooth_noise(p.size_px, p.smoothing_scale_px, base.derive("field"));
  const Raster<std::uint8_t> carve = build_carve_mask(p, base);

  const long n = static_cast<long>(field.size());
  auto fraction_at = [&](float thr) {
    long f = 0;
    for (long i = 0; i < n; ++i)
      if (field.v[i] > thr && !carve.v[i]) ++f;
    return static_cast<double>(f) / static_cast<double>(n);
  };

  float lo = *std::min_element(field.v.begin(), field.v.end()) - 1.0f;
  float hi = *std::max_element(field.v.begin(), field.v.end()) + 1.0f;
  float thr = 0.0f;
  double frac = 0.0;
  bool ok = false;
  for (int it = 0; it < 100; ++it) {
    thr = 0.5f * (lo + hi);
    frac = fraction_at(thr);
    if (std::abs(frac - p.forest_fraction_target) <= 0.05) {
      ok = true;
      break;
    }
    if (frac > p.forest_fraction_target)
      lo = thr;
    else
      hi = thr;
  }
  if (!ok)
    throw ConfigError("generate_truth: forest fraction target unattainable after 100 iterations");

  Raster<std::uint8_t> truth(p.size_px, p.size_px, 0);
  for (long i = 0; i < n; ++i) truth.v[i] = (field.v[i] > thr && !carve.v[i]) ? 1 : 0;
  return truth;
}

InSARScene simulate_scene(const SynthParams& p, const SceneGeometry& geom,
                          const std::string& scene_id) {
  p.validate();
  const double hamb = compute_hamb(geom);
  Rng base(p.seed);

  InSARScene s;
  s.geometry = geom;
  s.scene_id = scene_id;
  s.seed = p.seed;
  s.label = generate_truth(p);
  const int n = p.size_px;

  Raster<float> canopy(n, n, 0.0f);
  for (int i = 0; i < n * n; ++i)
    if (s.label.v[i]) canopy.v[i] = static_cast<float>(p.canopy_height_m);

  s.h_amb = Raster<float>(n, n, static_cast<float>(hamb));
  s.gamma_vol = volume_decorrelation(canopy, s.h_amb);

  const Raster<float> snr(n, n, static_cast<float>(p.snr_coh));
  const Raster<float> quant(n, n, static_cast<float>(p.quant_coh));
  const Raster<float> amb(n, n, static_cast<float>(p.amb_coh));
  s.gamma_tot = compose_coherence({&s.gamma_vol, &snr, &quant, &amb});

  // local incidence angle: nominal eta plus smooth +-3 deg terrain perturbation
  Raster<float> pert = smooth_noise(n, n / 8.0, base.derive("terrain"));
  float pmax = 1e-12f;
  for (float v : pert.v) pmax = std::max(pmax, std::abs(v));
  s.theta_i = Raster<float>(n, n);
  for (int i = 0; i < n * n; ++i)
    s.theta_i.v[i] = static_cast<float>(geom.eta_deg) + 3.0f * pert.v[i] / pmax;

  // backscatter: class mean times unit-mean gamma speckle
  Rng speckle = base.derive("speckle");
  s.beta0 = Raster<float>(n, n);
  for (int i = 0; i < n * n; ++i) {
    const double mean = s.label.v[i] ? p.beta0_forest_mean : p.beta0_ground_mean;
    s.beta0.v[i] = static_cast<float>(mean * speckle.gamma(p.speckle_looks, 1.0 / p.speckle_looks));
  }

  // 1-2 px shadow band on forest edges facing away from the look direction
  s.valid = Raster<std::uint8_t>(n, n, 1);
  Rng shadow = base.derive("shadow");
  const int step = geom.orbit_dir == OrbitDir::ascending ? 1 : -1;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (!s.label(r, c)) continue;
      const int cn = c + step;
      if (cn < 0 || cn >= n || s.label(r, cn)) continue;
      const int width = 1 + static_cast<int>(shadow.uniform_int(0, 1));
      for (int w = 1; w <= width; ++w) {
        const int cc = c + step * w;
        if (cc < 0 || cc >= n) break;
        if (s.label(r, cc)) break;
        s.valid(r, cc) = 0;
      }
    }
  return s;
}

namespace {

void write_band(std::ofstream& f, const Raster<float>& r) {
  f.write(reinterpret_cast<const char*>(r.v.data()),
          static_cast<std::streamsize>(r.v.size() * sizeof(float)));
}

void write_band(std::ofstream& f, const Raster<std::uint8_t>& r) {
  std::vector<float> tmp(r.v.begin(), r.v.end());
  f.write(reinterpret_cast<const char*>(tmp.data()),
          static_cast<std::streamsize>(tmp.size() * sizeof(float)));
}

void read_band(std::ifstream& f, Raster<float>& r, int rows, int cols) {
  r = Raster<float>(rows, cols);
  f.read(reinterpret_cast<char*>(r.v.data()),
         static_cast<std::streamsize>(r.v.size() * sizeof(float)));
}

void read_band(std::ifstream& f, Raster<std::uint8_t>& r, int rows, int cols) {
  Raster<float> tmp;
  read_band(f, tmp, rows, cols);
  r = Raster<std::uint8_t>(rows, cols);
  for (size_t i = 0; i < tmp.v.size(); ++i) r.v[i] = tmp.v[i] != 0.0f ? 1 : 0;
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read sidecar: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_scene(const std::string& base, const InSARScene& s) {
  std::ofstream f(base + ".bin", std::ios::binary);
  if (!f) throw DataError("cannot write scene: " + base + ".bin");
  write_band(f, s.beta0);
  write_band(f, s.gamma_tot);
  write_band(f, s.gamma_vol);
  write_band(f, s.theta_i);
  write_band(f, s.h_amb);
  write_band(f, s.valid);
  write_band(f, s.label);
  if (!f) throw DataError("short write on scene: " + base + ".bin");

  std::ofstream m(base + ".meta");
  if (!m) throw DataError("cannot write sidecar: " + base + ".meta");
  m << "scene_id = " << s.scene_id << "\n";
  m << "rows = " << s.beta0.rows << "\n";
  m << "cols = " << s.beta0.cols << "\n";
  m << "bands = beta0 gamma_tot gamma_vol theta_i h_amb valid label\n";
  m << "lambda_m = " << fmt_double(s.geometry.lambda_m) << "\n";
  m << "slant_range_m = " << fmt_double(s.geometry.slant_range_m) << "\n";
  m << "eta_deg = " << fmt_double(s.geometry.eta_deg) << "\n";
  m << "b_perp_m = " << fmt_double(s.geometry.b_perp_m) << "\n";
  m << "orbit_dir = " << orbit_name(s.geometry.orbit_dir) << "\n";
  m << "year = " << s.geometry.year << "\n";
  m << "seed = " << s.seed << "\n";
  m << "h_amb_m = " << fmt_double(compute_hamb(s.geometry)) << "\n";
  m << "forest_fraction = " << fmt_double(s.forest_fraction()) << "\n";
  m << "origin_r_px = " << s.origin_r_px << "\n";
  m << "origin_c_px = " << s.origin_c_px << "\n";
}

SceneHeader read_scene_header(const std::string& base) {
  const auto kv = read_kv(base + ".meta");
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("sidecar missing key '" + k + "': " + base + ".meta");
    return it->second;
  };
  SceneHeader h;
  h.scene_id = need("scene_id");
  h.rows = std::stoi(need("rows"));
  h.cols = std::stoi(need("cols"));
  h.geometry.lambda_m = std::stod(need("lambda_m"));
  h.geometry.slant_range_m = std::stod(need("slant_range_m"));
  h.geometry.eta_deg = std::stod(need("eta_deg"));
  h.geometry.b_perp_m = std::stod(need("b_perp_m"));
  h.geometry.orbit_dir = orbit_from_name(need("orbit_dir"));
  h.geometry.year = std::stoi(need("year"));
  h.seed = std::stoull(need("seed"));
  h.h_amb_m = std::stod(need("h_amb_m"));
  h.forest_fraction = std::stod(need("forest_fraction"));
  if (kv.count("origin_r_px")) h.origin_r_px = std::stol(kv.at("origin_r_px"));
  if (kv.count("origin_c_px")) h.origin_c_px = std::stol(kv.at("origin_c_px"));
  return h;
}

InSARScene read_scene(const std::string& base) {
  const SceneHeader h = read_scene_header(base);
  std::ifstream f(base + ".bin", std::ios::binary);
  if (!f) throw DataError("cannot read scene: " + base + ".bin");
  InSARScene s;
  s.scene_id = h.scene_id;
  s.geometry = h.geometry;
  s.seed = h.seed;
  s.origin_r_px = h.origin_r_px;
  s.origin_c_px = h.origin_c_px;
  read_band(f, s.beta0, h.rows, h.cols);
  read_band(f, s.gamma_tot, h.rows, h.cols);
  read_band(f, s.gamma_vol, h.rows, h.cols);
  read_band(f, s.theta_i, h.rows, h.cols);
  read_band(f, s.h_amb, h.rows, h.cols);
  read_band(f, s.valid, h.rows, h.cols);
  read_band(f, s.label, h.rows, h.cols);
  if (!f) throw DataError("truncated scene: " + base + ".bin");
  return s;
}

}  // namespace fmx::scene
