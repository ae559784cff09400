#include "fmx/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "fmx/config.hpp"

namespace fmx::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slug(std::string s) {
  for (auto& c : s) {
    if (c == ' ' || c == '+' || c == '%' || c == '.') c = '_';
  }
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct CellSpec {
  std::string approach;
  double fraction;
  std::string task;          // fsl | dst
  std::string pretext_task;  // ssl-id | ssl-in | empty
  std::string trainability;
};

train::ExperimentConfig base_experiment(const MatrixConfig& m) {
  train::ExperimentConfig c;
  c.manifest_path = m.manifest_path;
  c.model = m.model;
  c.batch_size = m.batch_size;
  c.learning_rate = m.learning_rate;
  c.patch_stride = m.patch_stride;
  c.early_stop_patience = m.early_stop_patience;
  c.seed = m.seed;
  return c;
}

}  // namespace

MatrixResult run_matrix(const MatrixConfig& cfg) {
  MatrixResult result;
  result.out_dir = cfg.out_dir;
  fs::create_directories(fs::path(cfg.out_dir) / "runs");

  // phase 1: pretext checkpoints per (task, replicate), shared downstream
  std::map<std::string, std::vector<std::string>> pretext_ckpts;  // task -> per-rep path
  std::map<std::string, std::string> pretext_errors;
  for (const std::string task : {"ssl-id", "ssl-in"}) {
    auto& paths = pretext_ckpts[task];
    paths.assign(cfg.replicates, "");
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      train::ExperimentConfig pc = base_experiment(cfg);
      pc.task = task;
      pc.epochs = cfg.epochs_pretext;
      pc.seed = cfg.seed + static_cast<std::uint64_t>(rep);
      pc.out_dir = (fs::path(cfg.out_dir) / "runs" / (slug(task) + "_rep" + std::to_string(rep)))
                       .string();
      try {
        paths[rep] = train::train_pretext(pc).checkpoint_path;
      } catch (const std::exception& ex) {
        pretext_errors[task + "/rep" + std::to_string(rep)] = ex.what();
      }
    }
  }

  // phase 2: segmentation cells
  std::vector<CellSpec> specs;
  specs.push_back({"Baseline", 1.0, "fsl", "", "E+D"});
  for (double f : cfg.fractions) {
    specs.push_back({"FSL", f, "fsl", "", "E+D"});
    specs.push_back({"SSL-Id E+D", f, "dst", "ssl-id", "E+D"});
    specs.push_back({"SSL-Id D", f, "dst", "ssl-id", "D"});
    specs.push_back({"SSL-In E+D", f, "dst", "ssl-in", "E+D"});
    specs.push_back({"SSL-In D", f, "dst", "ssl-in", "D"});
  }

  result.cells.resize(specs.size());
  data::Manifest manifest = data::load_manifest(cfg.manifest_path);

  auto run_cell = [&](size_t idx) {
    const CellSpec& sp = specs[idx];
    MatrixCell cell;
    cell.approach = sp.approach;
    cell.fraction = sp.fraction;
    try {
      for (int rep = 0; rep < cfg.replicates; ++rep) {
        train::ExperimentConfig rc = base_experiment(cfg);
        rc.task = sp.task;
        rc.trainability = sp.trainability;
        rc.label_fraction = sp.fraction;
        rc.epochs = cfg.epochs_seg;
        rc.seed = cfg.seed + static_cast<std::uint64_t>(rep);
        rc.out_dir = (fs::path(cfg.out_dir) / "runs" /
                      (slug(sp.approach) + "_f" + std::to_string(sp.fraction) + "_rep" +
                       std::to_string(rep)))
                         .string();
        if (sp.task == "dst") {
          const std::string& ck = pretext_ckpts.at(sp.pretext_task).at(rep);
          if (ck.empty())
            throw RunError("missing pretext checkpoint: " +
                           pretext_errors[sp.pretext_task + "/rep" + std::to_string(rep)]);
          rc.init_checkpoint = ck;
        }
        train::RunResult rr = train::train_segmentation(rc);
        eval::EvalResult ev = eval::bucket_evaluate(rr.checkpoint_path, manifest);
        for (const auto& b : ev.buckets)
          if (b.n_pixels > 0) cell.outcome.f1w[b.bucket_id].push_back(b.f1w);
        cell.outcome.evals.push_back(std::move(ev));
        cell.outcome.runs.push_back(std::move(rr));
      }
      for (const auto& [bucket, vals] : cell.outcome.f1w)
        cell.outcome.f1w_mean[bucket] = eval::mean_of(vals);
    } catch (const std::exception& ex) {
      cell.failed = true;
      cell.error = ex.what();
    }
    result.cells[idx] = std::move(cell);
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < specs.size(); ++i) run_cell(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex mu;
    size_t next = 0;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        while (true) {
          size_t idx;
          {
            std::lock_guard<std::mutex> lk(mu);
            if (next >= specs.size()) return;
            idx = next++;
          }
          run_cell(idx);
        }
      });
    for (auto& th : pool) th.join();
  }

  write_matrix_outputs(result, cfg);
  return result;
}

void write_matrix_outputs(const MatrixResult& result, const MatrixConfig& cfg) {
  const fs::path out(result.out_dir);
  fs::create_directories(out);

  {  // F1w per bucket per approach per fraction, h_amb buckets only
    std::ofstream f(out / "fig3_table.csv");
    f << "approach,fraction,bucket,f1w_mean";
    for (int r = 0; r < cfg.replicates; ++r) f << ",f1w_run" << (r + 1);
    f << "\n";
    f.precision(10);
    for (const auto& cell : result.cells) {
      if (cell.failed) continue;
      for (const char* bucket : {"short", "mid", "large"}) {
        auto it = cell.outcome.f1w.find(bucket);
        if (it == cell.outcome.f1w.end()) continue;
        f << cell.approach << "," << cell.fraction << "," << bucket << ","
          << cell.outcome.f1w_mean.at(bucket);
        for (double v : it->second) f << "," << v;
        f << "\n";
      }
    }
  }

  {  // full metric tables, all subsets, per-run plus mean rows
    std::ofstream f(out / "appendix_tables.csv");
    f << "subset,approach,fraction,run,oa,f1w,precision_f,recall_f,f1_f,precision_nf,recall_nf,"
         "f1_nf\n";
    f.precision(10);
    for (const auto& cell : result.cells) {
      if (cell.failed) continue;
      for (const char* bucket : eval::kBucketIds) {
        std::vector<const eval::MetricsReport*> runs;
        for (const auto& ev : cell.outcome.evals)
          for (const auto& b : ev.buckets)
            if (b.bucket_id == bucket && b.n_pixels > 0) runs.push_back(&b);
        if (runs.empty()) continue;
        auto row = [&](const std::string& run_label, auto get) {
          f << bucket << "," << cell.approach << "," << cell.fraction << "," << run_label;
          for (int m = 0; m < 8; ++m) f << "," << get(m);
          f << "\n";
        };
        for (size_t r = 0; r < runs.size(); ++r) {
          const auto* b = runs[r];
          const double vals[8] = {b->oa,          b->f1w,       b->precision_f, b->recall_f,
                                  b->f1_f,        b->precision_nf, b->recall_nf, b->f1_nf};
          row(std::to_string(r + 1), [&](int m) { return vals[m]; });
        }
        auto mean_col = [&](auto sel) {
          std::vector<double> xs;
          for (const auto* b : runs) xs.push_back(sel(b));
          return eval::mean_of(xs);
        };
        const double mvals[8] = {
            mean_col([](const eval::MetricsReport* b) { return b->oa; }),
            mean_col([](const eval::MetricsReport* b) { return b->f1w; }),
            mean_col([](const eval::MetricsReport* b) { return b->precision_f; }),
            mean_col([](const eval::MetricsReport* b) { return b->recall_f; }),
            mean_col([](const eval::MetricsReport* b) { return b->f1_f; }),
            mean_col([](const eval::MetricsReport* b) { return b->precision_nf; }),
            mean_col([](const eval::MetricsReport* b) { return b->recall_nf; }),
            mean_col([](const eval::MetricsReport* b) { return b->f1_nf; })};
        row("mean", [&](int m) { return mvals[m]; });
      }
    }
  }

  {  // machine-readable report
    json j;
    j["out_dir"] = result.out_dir;
    j["replicates"] = cfg.replicates;
    j["fractions"] = cfg.fractions;
    j["cells"] = json::array();
    for (const auto& cell : result.cells) {
      json jc{{"approach", cell.approach},
              {"fraction", cell.fraction},
              {"failed", cell.failed},
              {"error", cell.error}};
      if (!cell.failed) {
        jc["f1w_mean"] = cell.outcome.f1w_mean;
        jc["f1w_runs"] = cell.outcome.f1w;
        json jruns = json::array();
        for (const auto& rr : cell.outcome.runs)
          jruns.push_back({{"run_dir", rr.run_dir},
                           {"checkpoint", rr.checkpoint_path},
                           {"seed", rr.seed},
                           {"digest", rr.config_digest},
                           {"best_epoch", rr.best_epoch},
                           {"best_val_loss", rr.best_val_loss}});
        jc["runs"] = jruns;
      }
      j["cells"].push_back(jc);
    }
    std::ofstream f(out / "report.json");
    f << j.dump(2) << "\n";
  }
}

void write_f1w_chart(const std::string& path_base, const std::string& title,
                     const std::vector<ChartSeries>& series) {
  {  // exact values; the SVG is a view of this table
    std::ofstream f(path_base + ".csv");
    f << "series,fraction,f1w\n";
    f.precision(17);
    for (const auto& s : series)
      for (const auto& [x, y] : s.points) f << s.name << "," << x << "," << y << "\n";
  }

  const int W = 640, H = 420, ml = 60, mr = 160, mt = 40, mb = 50;
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (series.empty() || xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) {
    xmin -= 0.01;
    xmax += 0.01;
  }
  const double ypad = std::max(0.005, (ymax - ymin) * 0.1);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b"};
  std::ofstream f(path_base + ".svg");
  if (!f) throw DataError("cannot write chart: " + path_base + ".svg");
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
    << "</text>\n";
  f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  f << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
    << "' text-anchor='middle' font-size='12'>labeled fraction</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    f << "<text x='" << ml - 6 << "' y='" << py(y) + 4
      << "' text-anchor='end' font-size='10'>";
    f.precision(3);
    f << y << "</text>\n";
    f << "<line x1='" << ml << "' x2='" << W - mr << "' y1='" << py(y) << "' y2='" << py(y)
      << "' stroke='#dddddd'/>\n";
  }
  int si = 0;
  for (const auto& s : series) {
    const char* color = kColors[si % 6];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    auto pts = s.points;
    std::sort(pts.begin(), pts.end());
    for (const auto& [x, y] : pts) f << px(x) << "," << py(y) << " ";
    f << "'/>\n";
    for (const auto& [x, y] : pts)
      f << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << color << "'/>\n";
    f << "<text x='" << W - mr + 10 << "' y='" << mt + 16 * si + 10 << "' font-size='11' fill='"
      << color << "'>" << s.name << "</text>\n";
    ++si;
  }
  f << "</svg>\n";
}

std::vector<std::string> write_report(const ReportConfig& cfg) {
  std::vector<std::string> skipped;
  std::ifstream rf(cfg.matrix_report);
  if (!rf) throw DataError("cannot read matrix report: " + cfg.matrix_report);
  json rep = json::parse(rf, nullptr, false);
  if (rep.is_discarded()) throw DataError("corrupt matrix report: " + cfg.matrix_report);
  fs::create_directories(cfg.out_dir);

  for (const char* bucket : {"short", "mid", "large", "desc-2013-analog"}) {
    std::map<std::string, ChartSeries> by_approach;
    for (const auto& cell : rep.at("cells")) {
      if (cell.at("failed").get<bool>()) continue;
      const auto& means = cell.at("f1w_mean");
      if (!means.count(bucket)) continue;
      auto& s = by_approach[cell.at("approach").get<std::string>()];
      s.name = cell.at("approach").get<std::string>();
      s.points.emplace_back(cell.at("fraction").get<double>(), means.at(bucket).get<double>());
    }
    if (by_approach.empty()) continue;
    std::vector<ChartSeries> series;
    for (auto& [_, s] : by_approach) series.push_back(std::move(s));
    write_f1w_chart((fs::path(cfg.out_dir) / (std::string("f1w_") + slug(bucket))).string(),
                    std::string("F1w vs labeled fraction (") + bucket + ")", series);
  }

  // confusion-map panels for the first runs that still exist on disk
  if (!cfg.manifest_path.empty()) {
    const data::Manifest manifest = data::load_manifest(cfg.manifest_path);
    int made = 0;
    for (const auto& cell : rep.at("cells")) {
      if (cell.at("failed").get<bool>() || !cell.count("runs")) continue;
      for (const auto& run : cell.at("runs")) {
        const std::string ckpt = run.at("checkpoint").get<std::string>();
        if (!fs::exists(ckpt)) {
          skipped.push_back(ckpt);
          continue;
        }
        std::string schema_json;
        ModelParams params = load_checkpoint(ckpt, "", &schema_json);
        auto schema = models::EncoderSchema::from_json(schema_json);
        models::UNet model(schema, &params);
        int panels = 0;
        for (const auto& e : manifest.entries) {
          if (e.split != data::Split::test) continue;
          if (panels >= cfg.panels_per_bucket) break;
          const scene::InSARScene s = scene::read_scene(e.path);
          const Raster<float> prob = eval::predict_scene(model, s, *manifest.channel_stats);
          const auto img = eval::render_confusion_map(prob, s.label, s.valid);
          const std::string base =
              (fs::path(cfg.out_dir) /
               ("panel_" + slug(cell.at("approach").get<std::string>()) + "_" + e.scene_id))
                  .string();
          eval::write_ppm(base + ".ppm", img);
          eval::write_confusion_sidecar(base + ".meta", img);
          ++panels;
          ++made;
        }
        break;  // one run per cell is enough for panels
      }
      if (made >= 12) break;
    }
  }
  return skipped;
}

}  // namespace fmx::report
