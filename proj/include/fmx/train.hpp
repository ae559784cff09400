#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fmx/dataset.hpp"
#include "fmx/eval.hpp"
#include "fmx/models.hpp"

namespace fmx::train {

struct ExperimentConfig {
  std::string task;             // ssl-id | ssl-in | fsl | dst
  std::string init_checkpoint;  // required for dst, must point at an ssl-* run
  std::string trainability = "E+D";
  double label_fraction = 1.0;  // one of 0.015 / 0.08 / 0.22 / 1.0
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  std::string manifest_path;
  std::string out_dir;
  models::EncoderSchema model;
  int patch_stride = 128;
  int early_stop_patience = 10;

  void validate() const;
};

std::string config_digest(const ExperimentConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct RunResult {
  std::vector<EpochStats> curves;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<std::string> train_scene_ids;  // provenance (train + unlabeled roles)
  std::string run_dir;
};

// Adam over the trainable entries of a parameter collection.
class Adam {
 public:
  explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ModelParams& params);

 private:
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// CAE pretext training (identity or inpainting); fresh mask per patch per
// epoch, best-validation checkpointing, deterministic given the seed.
RunResult train_pretext(const ExperimentConfig& cfg);

// U-Net training: fsl = random init, E+D; dst = encoder transfer from the
// configured ssl checkpoint plus the configured trainability.
RunResult train_segmentation(const ExperimentConfig& cfg);

struct ReplicateOutcome {
  std::vector<RunResult> runs;
  std::vector<eval::EvalResult> evals;              // per replicate (seg tasks)
  std::map<std::string, std::vector<double>> f1w;   // bucket -> per-run F1w
  std::map<std::string, double> f1w_mean;           // bucket -> mean over runs
};

// n runs with seeds seed, seed+1, ..., aggregated by exact arithmetic mean.
// For dst tasks a pretext template config (same seed policy) trains the
// per-replicate source checkpoint first.
ReplicateOutcome run_replicates(const ExperimentConfig& cfg, int n,
                                const ExperimentConfig* pretext_template = nullptr);

}  // namespace fmx::train
