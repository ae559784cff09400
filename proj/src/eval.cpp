#include "fmx/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "fmx/losses.hpp"

namespace fmx::eval {

ConfusionCounts confusion(const Raster<float>& pred_prob, const Raster<std::uint8_t>& label,
                          const Raster<std::uint8_t>& valid, double threshold) {
  if (pred_prob.rows != label.rows || pred_prob.cols != label.cols ||
      label.rows != valid.rows || label.cols != valid.cols)
    throw ValidationError("confusion: shape mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < pred_prob.v.size(); ++i) {
    if (!valid.v[i]) continue;
    const bool pred_forest = pred_prob.v[i] >= threshold;
    const bool is_forest = label.v[i] != 0;
    if (pred_forest && is_forest)
      ++c.tp;
    else if (pred_forest && !is_forest)
      ++c.fp;
    else if (!pred_forest && is_forest)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

namespace {

// ratio with the degenerate-denominator convention of the report
double safe_ratio(long long num, long long den, bool* degenerate) {
  if (den == 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport r;
  r.bucket_id = c.scope;
  r.n_pixels = c.total();
  if (r.n_pixels == 0) {
    r.degenerate_forest = r.degenerate_nonforest = true;
    return r;
  }
  r.oa = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n_pixels);

  r.precision_f = safe_ratio(c.tp, c.tp + c.fp, &r.degenerate_forest);
  r.recall_f = safe_ratio(c.tp, c.tp + c.fn, &r.degenerate_forest);
  r.f1_f = f1_of(r.precision_f, r.recall_f);

  // non-forest metrics come from the swapped confusion
  r.precision_nf = safe_ratio(c.tn, c.tn + c.fn, &r.degenerate_nonforest);
  r.recall_nf = safe_ratio(c.tn, c.tn + c.fp, &r.degenerate_nonforest);
  r.f1_nf = f1_of(r.precision_nf, r.recall_nf);

  r.w_forest = static_cast<double>(c.tp + c.fn) / static_cast<double>(r.n_pixels);
  r.w_nonforest = static_cast<double>(c.tn + c.fp) / static_cast<double>(r.n_pixels);
  // a class absent from both reference and prediction is flagged; its
  // reference share (and hence its F1w weight) is already 0
  if (c.tp + c.fn == 0 && c.tp + c.fp == 0) r.degenerate_forest = true;
  if (c.tn + c.fp == 0 && c.tn + c.fn == 0) r.degenerate_nonforest = true;
  r.f1w = weighted_f1(r.f1_f, r.w_forest, r.f1_nf, r.w_nonforest);
  return r;
}

double weighted_f1(double f1_forest, double w_forest, double f1_nonforest, double w_nonforest) {
  return w_forest * f1_forest + w_nonforest * f1_nonforest;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("mean_of: empty");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string bucket_of(double h_amb_m, scene::OrbitDir orbit_dir) {
  if (orbit_dir == scene::OrbitDir::descending) return "desc-2013-analog";
  if (h_amb_m < 40.0) return "short";
  if (h_amb_m <= 60.0) return "mid";
  return "large";
}

Raster<float> predict_scene(models::UNet& model, const scene::InSARScene& s,
                            const data::ChannelStats& stats) {
  const int rows = s.beta0.rows, cols = s.beta0.cols;
  const int size = data::Patch::kSize;
  if (rows < size || cols < size)
    throw DataError("predict_scene: scene smaller than tile size");

  auto offsets = [&](int extent) {
    std::vector<int> off;
    for (int o = 0; o + size <= extent; o += size) off.push_back(o);
    if (off.back() + size < extent) off.push_back(extent - size);
    return off;
  };

  Raster<float> prob(rows, cols, 0.0f);
  const Raster<float>* bands[data::Patch::kChannels] = {&s.beta0, &s.gamma_tot, &s.gamma_vol,
                                                        &s.theta_i, &s.h_amb};
  for (int r0 : offsets(rows)) {
    for (int c0 : offsets(cols)) {
      Tensor x(1, data::Patch::kChannels, size, size);
      for (int b = 0; b < data::Patch::kChannels; ++b) {
        float* plane = x.at(0, b);
        const float mean = static_cast<float>(stats.mean[b]);
        const float inv = static_cast<float>(1.0 / stats.stddev[b]);
        for (int r = 0; r < size; ++r)
          for (int c = 0; c < size; ++c) {
            const bool ok = s.valid(r0 + r, c0 + c) != 0;
            plane[static_cast<long>(r) * size + c] =
                ok ? ((*bands[b])(r0 + r, c0 + c) - mean) * inv : 0.0f;
          }
      }
      const Tensor y = model.forward(x, nn::Mode::eval);
      const float* yp = y.at(0, 0);
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          prob(r0 + r, c0 + c) = yp[static_cast<long>(r) * size + c];
    }
  }
  return prob;
}

EvalResult bucket_evaluate(const ModelParams& params, const models::EncoderSchema& schema,
                           const data::Manifest& manifest) {
  if (!manifest.channel_stats)
    throw DataError("bucket_evaluate: manifest has no channel statistics");
  ModelParams p = params;  // the graph mutates caches only; params copied for const-correctness
  models::UNet model(schema, &p);

  std::map<std::string, ConfusionCounts> bucket_counts;
  EvalResult out;
  for (const auto& e : manifest.entries) {
    if (e.split != data::Split::test) continue;
    const scene::InSARScene s = scene::read_scene(e.path);
    const Raster<float> prob = predict_scene(model, s, *manifest.channel_stats);
    ConfusionCounts c = confusion(prob, s.label, s.valid);
    c.scope = e.scene_id;
    out.scenes.push_back(c);
    ConfusionCounts& bc = bucket_counts[bucket_of(e.h_amb_m, e.orbit_dir)];
    bc += c;
  }
  for (const char* id : kBucketIds) {
    ConfusionCounts c = bucket_counts.count(id) ? bucket_counts[id] : ConfusionCounts{};
    c.scope = id;
    MetricsReport r = metrics(c);
    r.bucket_id = id;
    out.buckets.push_back(r);
  }
  return out;
}

EvalResult bucket_evaluate(const std::string& checkpoint_path, const data::Manifest& manifest) {
  std::string schema_json;
  ModelParams params = load_checkpoint(checkpoint_path, "", &schema_json);
  const auto schema = models::EncoderSchema::from_json(schema_json);
  return bucket_evaluate(params, schema, manifest);
}

Raster<Rgb> render_confusion_map(const Raster<float>& pred_prob, const Raster<std::uint8_t>& label,
                                 const Raster<std::uint8_t>& valid, double threshold) {
  if (pred_prob.rows != label.rows || pred_prob.cols != label.cols ||
      label.rows != valid.rows || label.cols != valid.cols)
    throw ValidationError("render_confusion_map: shape mismatch");
  Raster<Rgb> img(label.rows, label.cols);
  for (size_t i = 0; i < img.v.size(); ++i) {
    if (!valid.v[i]) {
      img.v[i] = kColorInvalid;
      continue;
    }
    const bool pf = pred_prob.v[i] >= threshold;
    const bool lf = label.v[i] != 0;
    img.v[i] = pf ? (lf ? kColorTp : kColorFp) : (lf ? kColorFn : kColorTn);
  }
  return img;
}

void write_ppm(const std::string& path, const Raster<Rgb>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write image: " + path);
  f << "P6\n" << img.cols << " " << img.rows << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.v.data()),
          static_cast<std::streamsize>(img.v.size() * sizeof(Rgb)));
}

void write_confusion_sidecar(const std::string& path, const Raster<Rgb>& img) {
  long long n[5] = {0, 0, 0, 0, 0};
  for (const auto& px : img.v) {
    if (px == kColorTp) ++n[0];
    else if (px == kColorTn) ++n[1];
    else if (px == kColorFp) ++n[2];
    else if (px == kColorFn) ++n[3];
    else ++n[4];
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write sidecar: " + path);
  auto line = [&](const char* name, Rgb c, long long cnt) {
    f << name << " = rgb(" << int(c.r) << "," << int(c.g) << "," << int(c.b) << ") count=" << cnt
      << "\n";
  };
  line("tp", kColorTp, n[0]);
  line("tn", kColorTn, n[1]);
  line("fp", kColorFp, n[2]);
  line("fn", kColorFn, n[3]);
  line("invalid", kColorInvalid, n[4]);
}

MosaicResult mosaic(const std::vector<PlacedPrediction>& scenes) {
  if (scenes.empty()) throw DataError("mosaic: no scenes");
  long rows = 0, cols = 0;
  for (const auto& s : scenes) {
    if (s.origin_r < 0 || s.origin_c < 0)
      throw DataError("mosaic: inconsistent grid (negative placement)");
    if (s.prob.rows != s.valid.rows || s.prob.cols != s.valid.cols)
      throw DataError("mosaic: prob/valid shape mismatch");
    rows = std::max(rows, s.origin_r + s.prob.rows);
    cols = std::max(cols, s.origin_c + s.prob.cols);
  }
  Raster<float> acc(static_cast<int>(rows), static_cast<int>(cols), 0.0f);
  Raster<std::uint32_t> cnt(static_cast<int>(rows), static_cast<int>(cols), 0);
  for (const auto& s : scenes)
    for (int r = 0; r < s.prob.rows; ++r)
      for (int c = 0; c < s.prob.cols; ++c) {
        if (!s.valid(r, c)) continue;
        acc(static_cast<int>(s.origin_r) + r, static_cast<int>(s.origin_c) + c) += s.prob(r, c);
        cnt(static_cast<int>(s.origin_r) + r, static_cast<int>(s.origin_c) + c) += 1;
      }
  MosaicResult out;
  out.prob = Raster<float>(static_cast<int>(rows), static_cast<int>(cols), 0.0f);
  out.covered = Raster<std::uint8_t>(static_cast<int>(rows), static_cast<int>(cols), 0);
  for (size_t i = 0; i < acc.v.size(); ++i) {
    if (cnt.v[i] == 0) continue;
    out.prob.v[i] = acc.v[i] / static_cast<float>(cnt.v[i]);
    out.covered.v[i] = 1;
  }
  return out;
}

void write_geomap(const std::string& base, const GeoMap& m) {
  std::ofstream f(base + ".bin", std::ios::binary);
  if (!f) throw DataError("cannot write map: " + base + ".bin");
  std::vector<float> tmp(m.label.v.begin(), m.label.v.end());
  f.write(reinterpret_cast<const char*>(tmp.data()),
          static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  tmp.assign(m.valid.v.begin(), m.valid.v.end());
  f.write(reinterpret_cast<const char*>(tmp.data()),
          static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  std::ofstream s(base + ".meta");
  s << "map_id = " << m.id << "\n";
  s << "rows = " << m.label.rows << "\n";
  s << "cols = " << m.label.cols << "\n";
  s << "bands = label valid\n";
  s << "res_m = " << m.res_m << "\n";
  s << "origin_r_m = " << m.origin_r_m << "\n";
  s << "origin_c_m = " << m.origin_c_m << "\n";
}

GeoMap read_geomap(const std::string& base) {
  std::ifstream s(base + ".meta");
  if (!s) throw DataError("cannot read map sidecar: " + base + ".meta");
  GeoMap m;
  int rows = -1, cols = -1;
  std::string line;
  while (std::getline(s, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string x) {
      const auto a = x.find_first_not_of(" \t");
      const auto b = x.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : x.substr(a, b - a + 1);
    };
    const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k == "map_id") m.id = v;
    else if (k == "rows") rows = std::stoi(v);
    else if (k == "cols") cols = std::stoi(v);
    else if (k == "res_m") m.res_m = std::stod(v);
    else if (k == "origin_r_m") m.origin_r_m = std::stod(v);
    else if (k == "origin_c_m") m.origin_c_m = std::stod(v);
  }
  if (rows <= 0 || cols <= 0) throw DataError("map sidecar missing shape: " + base);
  std::ifstream f(base + ".bin", std::ios::binary);
  if (!f) throw DataError("cannot read map: " + base + ".bin");
  std::vector<float> tmp(static_cast<size_t>(rows) * cols);
  auto read_u8 = [&](Raster<std::uint8_t>& r) {
    f.read(reinterpret_cast<char*>(tmp.data()),
           static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    r = Raster<std::uint8_t>(rows, cols);
    for (size_t i = 0; i < tmp.size(); ++i) r.v[i] = tmp[i] != 0.0f ? 1 : 0;
  };
  read_u8(m.label);
  read_u8(m.valid);
  if (!f) throw DataError("truncated map: " + base + ".bin");
  return m;
}

IntercompareReport intercompare(const std::vector<GeoMap>& predictions, const GeoMap& reference) {
  IntercompareReport rep;
  ConfusionCounts overall;
  ConfusionCounts gt5, gt10;
  long long compared_cells = 0;

  for (const auto& pred : predictions) {
    // vote per reference cell: pred pixels whose centers fall inside it
    std::map<std::pair<int, int>, std::pair<int, int>> votes;  // cell -> (forest, total)
    for (int r = 0; r < pred.label.rows; ++r)
      for (int c = 0; c < pred.label.cols; ++c) {
        if (!pred.valid(r, c)) continue;
        const double y = pred.origin_r_m + (r + 0.5) * pred.res_m;
        const double x = pred.origin_c_m + (c + 0.5) * pred.res_m;
        const int rr = static_cast<int>(std::floor((y - reference.origin_r_m) / reference.res_m));
        const int cc = static_cast<int>(std::floor((x - reference.origin_c_m) / reference.res_m));
        if (rr < 0 || rr >= reference.label.rows || cc < 0 || cc >= reference.label.cols) continue;
        if (!reference.valid(rr, cc)) continue;
        auto& v = votes[{rr, cc}];
        v.first += pred.label(r, c) ? 1 : 0;
        v.second += 1;
      }
    ConfusionCounts mc;
    mc.scope = pred.id;
    for (const auto& [cell, v] : votes) {
      const bool pf = 2 * v.first >= v.second;  // majority, ties -> forest
      const bool rf = reference.label(cell.first, cell.second) != 0;
      if (pf && rf) ++mc.tp;
      else if (pf && !rf) ++mc.fp;
      else if (!pf && rf) ++mc.fn;
      else ++mc.tn;
    }
    compared_cells += mc.total();
    overall += mc;
    rep.per_map.emplace_back(pred.id, metrics(mc));
    if (mc.total() > 0) {
      const double nf_share = static_cast<double>(mc.tn + mc.fp) / static_cast<double>(mc.total());
      if (nf_share > 0.05) {
        gt5 += mc;
        ++rep.n_maps_gt5;
      }
      if (nf_share > 0.10) {
        gt10 += mc;
        ++rep.n_maps_gt10;
      }
    }
  }
  if (compared_cells == 0) throw DataError("intercompare: zero overlap between maps");

  rep.n_maps = static_cast<int>(predictions.size());
  overall.scope = "overall";
  rep.overall = metrics(overall);
  rep.f1_nf_gt5 = rep.n_maps_gt5 > 0 ? metrics(gt5).f1_nf : 0.0;
  rep.f1_nf_gt10 = rep.n_maps_gt10 > 0 ? metrics(gt10).f1_nf : 0.0;
  return rep;
}

}  // namespace fmx::eval
