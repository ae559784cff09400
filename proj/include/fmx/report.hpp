#pragma once

#include <string>
#include <vector>

#include "fmx/train.hpp"

namespace fmx::report {

struct MatrixConfig {
  std::string manifest_path;
  std::string out_dir;
  std::vector<double> fractions = {0.015, 0.08, 0.22};
  int replicates = 3;
  std::uint64_t seed = 1;
  models::EncoderSchema model;
  int epochs_pretext = 15;
  int epochs_seg = 30;
  int batch_size = 16;
  double learning_rate = 1e-4;
  int patch_stride = 128;
  int early_stop_patience = 10;
  int jobs = 1;
};

inline const std::vector<std::string> kSegApproaches = {"FSL", "SSL-Id E+D", "SSL-Id D",
                                                        "SSL-In E+D", "SSL-In D"};

struct MatrixCell {
  std::string approach;  // Baseline | FSL | SSL-Id E+D | SSL-Id D | SSL-In E+D | SSL-In D
  double fraction = 1.0;
  bool failed = false;
  std::string error;
  train::ReplicateOutcome outcome;
};

struct MatrixResult {
  std::vector<MatrixCell> cells;
  std::string out_dir;
};

// Full experiment sweep: {Baseline(100%)} + {FSL, SSL-Id E+D/D, SSL-In E+D/D}
// x fractions, each averaged over `replicates` seeded runs. Pretext
// checkpoints are trained once per (task, replicate) and shared across
// fractions and trainability modes. Failed cells are recorded and the sweep
// continues.
MatrixResult run_matrix(const MatrixConfig& cfg);

// fig3_table.csv (F1w per bucket/approach/fraction), appendix_tables.csv
// (full per-run metrics per subset) and report.json under result.out_dir.
void write_matrix_outputs(const MatrixResult& result, const MatrixConfig& cfg);

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (fraction, f1w)
};

// Line chart plus an exact-value CSV sidecar next to it.
void write_f1w_chart(const std::string& path_base, const std::string& title,
                     const std::vector<ChartSeries>& series);

struct ReportConfig {
  std::string matrix_report;  // report.json produced by run_matrix
  std::string out_dir;
  std::string manifest_path;  // optional; enables confusion-map panels
  int panels_per_bucket = 1;
};

// Charts per bucket from a stored matrix report; renders confusion-map panels
// when a manifest is given. Missing run directories are listed and skipped.
std::vector<std::string> write_report(const ReportConfig& cfg);

}  // namespace fmx::report
