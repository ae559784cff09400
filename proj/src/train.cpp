#include "fmx/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "fmx/kernels.hpp"
#include "fmx/losses.hpp"

namespace fmx::train {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  static const std::set<std::string> kTasks = {"ssl-id", "ssl-in", "fsl", "dst"};
  if (!kTasks.count(task)) throw ConfigError("unknown task: " + task);
  models::trainability_from_name(trainability);
  if (task == "dst" && init_checkpoint.empty())
    throw ConfigError("dst requires init_checkpoint from an ssl-* run");
  if (!(label_fraction > 0.0) || label_fraction > 1.0)
    throw ConfigError("label_fraction outside (0, 1]");
  if (epochs <= 0 || batch_size <= 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (manifest_path.empty()) throw ConfigError("manifest path missing");
  if (out_dir.empty()) throw ConfigError("output directory missing");
  model.validate();
}

static json config_to_json(const ExperimentConfig& c) {
  return json{{"task", c.task},
              {"init_checkpoint", c.init_checkpoint},
              {"trainability", c.trainability},
              {"label_fraction", c.label_fraction},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"manifest", c.manifest_path},
              {"out_dir", c.out_dir},
              {"model",
               {{"in_channels", c.model.in_channels},
                {"base_filters", c.model.base_filters},
                {"n_levels", c.model.n_levels}}},
              {"patch_stride", c.patch_stride},
              {"early_stop_patience", c.early_stop_patience}};
}

std::string config_digest(const ExperimentConfig& cfg) {
  return to_hex(fnv1a64(config_to_json(cfg).dump()));
}

void Adam::step(ModelParams& params) {
  if (m_.empty()) {
    m_.resize(params.entries.size());
    v_.resize(params.entries.size());
    for (size_t i = 0; i < params.entries.size(); ++i) {
      if (params.entries[i].is_buffer) continue;
      m_[i].assign(params.entries[i].value.size(), 0.0f);
      v_[i].assign(params.entries[i].value.size(), 0.0f);
    }
  }
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t i = 0; i < params.entries.size(); ++i) {
    auto& e = params.entries[i];
    if (e.is_buffer || !e.trainable) continue;
    if (m_[i].empty()) {
      m_[i].assign(e.value.size(), 0.0f);
      v_[i].assign(e.value.size(), 0.0f);
    }
    kern::adam_step(static_cast<int>(e.value.size()), e.value.data(), e.grad.data(),
                    m_[i].data(), v_[i].data(), lr_, beta1_, beta2_, eps_, bc1, bc2);
  }
}

namespace {

constexpr int kPatchSize = data::Patch::kSize;
constexpr int kChannels = data::Patch::kChannels;
constexpr long kPlane = static_cast<long>(kPatchSize) * kPatchSize;

struct PatchPool {
  std::vector<data::Patch> train, val;
  std::vector<std::string> train_scene_ids;
};

void audit_no_test_leakage(const data::Manifest& m, const std::vector<std::string>& used_ids) {
  std::set<std::string> test_ids;
  for (const auto& e : m.entries)
    if (e.split == data::Split::test) test_ids.insert(e.scene_id);
  for (const auto& id : used_ids)
    if (test_ids.count(id))
      throw RunError("test isolation violated: scene " + id + " reached an optimizer step");
}

data::ChannelStats stats_or_compute(const data::Manifest& m) {
  if (m.channel_stats) return *m.channel_stats;
  // fall back to computing them from the train split
  std::vector<data::Patch> patches;
  for (const auto& e : m.entries) {
    if (e.split != data::Split::train) continue;
    auto ps = data::extract_patches(scene::read_scene(e.path));
    patches.insert(patches.end(), std::make_move_iterator(ps.begin()),
                   std::make_move_iterator(ps.end()));
  }
  if (patches.empty()) throw DataError("cannot derive channel stats: train split empty");
  return data::compute_stats(patches);
}

PatchPool load_patches(const data::Manifest& m, const data::ChannelStats& stats, int stride,
                       bool pretext) {
  PatchPool pool;
  for (const auto& e : m.entries) {
    const bool in_train = pretext
                              ? (e.split == data::Split::train || e.split == data::Split::unlabeled)
                              : e.split == data::Split::train;
    const bool in_val = e.split == data::Split::val;
    if (!in_train && !in_val) continue;
    const scene::InSARScene s = scene::read_scene(e.path);
    auto ps = data::extract_patches(s, kPatchSize, in_train ? stride : kPatchSize);
    for (auto& p : ps) {
      data::normalize(p, stats);
      (in_train ? pool.train : pool.val).push_back(std::move(p));
    }
    if (in_train) pool.train_scene_ids.push_back(e.scene_id);
  }
  return pool;
}

// element-aligned validity (per-pixel mask tiled across channels and batch)
void fill_valid(const std::vector<const data::Patch*>& batch, std::vector<std::uint8_t>& valid) {
  valid.assign(batch.size() * kChannels * kPlane, 1);
  for (size_t b = 0; b < batch.size(); ++b)
    for (int ch = 0; ch < kChannels; ++ch) {
      std::uint8_t* dst = valid.data() + (b * kChannels + ch) * kPlane;
      for (long i = 0; i < kPlane; ++i) dst[i] = batch[b]->valid.v[i];
    }
}

Tensor batch_features(const std::vector<const data::Patch*>& batch) {
  Tensor x(static_cast<int>(batch.size()), kChannels, kPatchSize, kPatchSize);
  for (size_t b = 0; b < batch.size(); ++b)
    std::copy(batch[b]->features.begin(), batch[b]->features.end(), x.at(static_cast<int>(b), 0));
  return x;
}

struct RunIo {
  fs::path dir;
  explicit RunIo(const std::string& out_dir) : dir(out_dir) { fs::create_directories(dir); }

  void write_config(const ExperimentConfig& cfg, const std::string& digest) const {
    json j = config_to_json(cfg);
    j["digest"] = digest;
    std::ofstream f(dir / "config.json");
    f << j.dump(2) << "\n";
  }
  void write_curves(const std::vector<EpochStats>& curves) const {
    std::ofstream f(dir / "curves.csv");
    f << "epoch,train_loss,val_loss\n";
    f.precision(10);
    for (const auto& e : curves) f << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
  }
  std::string ckpt_path() const { return (dir / "ckpt_best.fmck").string(); }
};

template <typename StepFn, typename ValFn>
RunResult run_loop(const ExperimentConfig& cfg, ModelParams& params,
                   const models::EncoderSchema& schema, size_t n_train, StepFn train_epoch,
                   ValFn val_loss_fn) {
  RunResult rr;
  rr.seed = cfg.seed;
  rr.config_digest = config_digest(cfg);
  RunIo io(cfg.out_dir);
  rr.run_dir = io.dir.string();
  io.write_config(cfg, rr.config_digest);

  if (n_train == 0) throw ConfigError("empty training selection");

  Adam opt(static_cast<float>(cfg.learning_rate));
  double best = std::numeric_limits<double>::infinity();
  ModelParams best_params = params;
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double train_loss = train_epoch(epoch, opt);
    const double val = val_loss_fn();
    if (!std::isfinite(val)) throw RunError("validation loss became non-finite");
    rr.curves.push_back({epoch, train_loss, val});
    if (val < best) {
      best = val;
      best_epoch = epoch;
      best_params = params;
    }
    if (cfg.early_stop_patience > 0 && epoch - best_epoch >= cfg.early_stop_patience) break;
  }

  rr.best_epoch = best_epoch;
  rr.best_val_loss = best;
  best_params.seed = cfg.seed;
  best_params.task_tag = cfg.task;
  best_params.config_digest = rr.config_digest;
  save_checkpoint(io.ckpt_path(), best_params, schema.to_json());
  rr.checkpoint_path = io.ckpt_path();
  io.write_curves(rr.curves);
  return rr;
}

std::vector<std::vector<int>> make_batches(size_t n, int batch_size, Rng rng) {
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (size_t s = 0; s < n; s += batch_size) {
    std::vector<int> b(order.begin() + s,
                       order.begin() + std::min(n, s + static_cast<size_t>(batch_size)));
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace

RunResult train_pretext(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != "ssl-id" && cfg.task != "ssl-in")
    throw ConfigError("train_pretext requires an ssl-* task");
  const bool inpaint = cfg.task == "ssl-in";

  data::Manifest manifest = data::load_manifest(cfg.manifest_path);
  // pretext selection: class-balanced scenes, stratified over h_amb
  data::Manifest selected;
  selected.channel_stats = manifest.channel_stats;
  for (const auto& e : manifest.entries)
    if (e.split == data::Split::test || data::balance_filter(e)) selected.entries.push_back(e);
  selected = data::stratified_select(selected, 2.0, 20, 10, cfg.seed);

  const data::ChannelStats stats = stats_or_compute(manifest);
  PatchPool pool = load_patches(selected, stats, cfg.patch_stride, /*pretext=*/true);
  audit_no_test_leakage(manifest, pool.train_scene_ids);
  if (pool.val.empty()) throw ConfigError("empty validation selection");

  ModelParams params = models::init_cae(cfg.model, cfg.seed);
  models::Cae model(cfg.model, &params);
  Rng base(cfg.seed);

  const size_t n_train = pool.train.size();
  std::vector<std::uint8_t> valid, mask_elem;
  std::vector<float> grad;

  auto eval_batch = [&](const std::vector<const data::Patch*>& batch, nn::Mode mode,
                        std::string_view mask_tag, std::uint64_t mask_salt, Tensor* dloss) {
    const Tensor x = batch_features(batch);
    fill_valid(batch, valid);
    Tensor input = x;
    if (inpaint) {
      mask_elem.assign(x.size(), 1);
      for (size_t b = 0; b < batch.size(); ++b) {
        Rng mrng = base.derive(mask_tag, mask_salt * 1000003ull + b);
        const losses::MaskSpec mask = losses::sample_mask(mrng);
        losses::apply_mask(input.at(static_cast<int>(b), 0), kChannels, mask);
        const Raster<std::uint8_t> mr = mask.to_raster();
        for (int ch = 0; ch < kChannels; ++ch)
          std::copy(mr.v.begin(), mr.v.end(),
                    mask_elem.begin() + (b * kChannels + ch) * kPlane);
      }
    }
    Tensor out = model.forward(input, mode);
    const long n = static_cast<long>(out.size());
    float loss;
    if (dloss) {
      grad.assign(n, 0.0f);
      loss = inpaint ? losses::inpainting_loss<float>(x.data(), out.data(), mask_elem.data(),
                                                      valid.data(), n,
                                                      static_cast<float>(losses::kWRec),
                                                      grad.data())
                     : losses::identity_loss<float>(x.data(), out.data(), valid.data(), n,
                                                    grad.data());
      *dloss = Tensor(out.n, out.c, out.h, out.w);
      std::copy(grad.begin(), grad.end(), dloss->v.begin());
    } else {
      loss = inpaint ? losses::inpainting_loss<float>(x.data(), out.data(), mask_elem.data(),
                                                      valid.data(), n,
                                                      static_cast<float>(losses::kWRec))
                     : losses::identity_loss<float>(x.data(), out.data(), valid.data(), n);
    }
    return static_cast<double>(loss);
  };

  auto train_epoch = [&](int epoch, Adam& opt) {
    const auto batches =
        make_batches(n_train, cfg.batch_size, base.derive("shuffle", static_cast<std::uint64_t>(epoch)));
    double acc = 0.0;
    long seen = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<const data::Patch*> batch;
      for (int i : batches[bi]) batch.push_back(&pool.train[i]);
      params.zero_grad();
      Tensor dloss;
      // fresh mask per patch per epoch
      const std::uint64_t salt = static_cast<std::uint64_t>(epoch) * 1000000007ull + bi;
      const double loss = eval_batch(batch, nn::Mode::train, "mask", salt, &dloss);
      model.backward(dloss);
      opt.step(params);
      acc += loss * static_cast<double>(batch.size());
      seen += static_cast<long>(batch.size());
    }
    return acc / static_cast<double>(seen);
  };

  auto val_fn = [&]() {
    double acc = 0.0;
    long seen = 0;
    for (size_t s = 0; s < pool.val.size(); s += cfg.batch_size) {
      std::vector<const data::Patch*> batch;
      for (size_t i = s; i < std::min(pool.val.size(), s + static_cast<size_t>(cfg.batch_size)); ++i)
        batch.push_back(&pool.val[i]);
      // validation masks fixed across epochs for comparability
      acc += eval_batch(batch, nn::Mode::eval, "valmask", s + 1, nullptr) *
             static_cast<double>(batch.size());
      seen += static_cast<long>(batch.size());
    }
    return acc / static_cast<double>(seen);
  };

  RunResult rr = run_loop(cfg, params, cfg.model, n_train, train_epoch, val_fn);
  rr.train_scene_ids = pool.train_scene_ids;
  return rr;
}

RunResult train_segmentation(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != "fsl" && cfg.task != "dst")
    throw ConfigError("train_segmentation requires task fsl or dst");

  data::Manifest manifest = data::load_manifest(cfg.manifest_path);
  data::Manifest selected = data::label_fraction_subset(manifest, cfg.label_fraction);

  const data::ChannelStats stats = stats_or_compute(manifest);
  PatchPool pool = load_patches(selected, stats, cfg.patch_stride, /*pretext=*/false);
  audit_no_test_leakage(manifest, pool.train_scene_ids);
  if (pool.val.empty()) throw ConfigError("empty validation selection");
  for (const auto& p : pool.train)
    if (!p.has_label) throw DataError("segmentation training requires labeled scenes");

  ModelParams params = models::init_unet(cfg.model, cfg.seed);
  if (cfg.task == "dst") {
    const ModelParams src = load_checkpoint(cfg.init_checkpoint, cfg.model.hash());
    if (src.task_tag != "ssl-id" && src.task_tag != "ssl-in")
      throw ConfigError("dst init checkpoint must come from an ssl-* run, got task '" +
                        src.task_tag + "'");
    models::transfer_encoder(src, params);
    models::set_trainability(params, models::trainability_from_name(cfg.trainability));
  } else {
    models::set_trainability(params, models::Trainability::encoder_and_decoder);
  }
  const bool frozen_encoder = models::encoder_fully_frozen(params);

  models::UNet model(cfg.model, &params);
  Rng base(cfg.seed);
  const size_t n_train = pool.train.size();

  auto batch_labels = [&](const std::vector<const data::Patch*>& batch, std::vector<float>& y,
                          std::vector<std::uint8_t>& valid) {
    y.assign(batch.size() * kPlane, 0.0f);
    valid.assign(batch.size() * kPlane, 1);
    for (size_t b = 0; b < batch.size(); ++b) {
      for (long i = 0; i < kPlane; ++i) {
        y[b * kPlane + i] = batch[b]->label.v[i] ? 1.0f : 0.0f;
        valid[b * kPlane + i] = batch[b]->valid.v[i];
      }
    }
  };

  std::vector<float> y, grad;
  std::vector<std::uint8_t> valid;

  auto eval_batch = [&](const std::vector<const data::Patch*>& batch, nn::Mode mode,
                        Tensor* dloss) {
    const Tensor x = batch_features(batch);
    batch_labels(batch, y, valid);
    Tensor out = model.forward(x, mode);
    const long n = static_cast<long>(out.size());
    float loss;
    if (dloss) {
      grad.assign(n, 0.0f);
      loss = losses::downstream_loss<float>(y.data(), out.data(), valid.data(), n, grad.data());
      *dloss = Tensor(out.n, out.c, out.h, out.w);
      std::copy(grad.begin(), grad.end(), dloss->v.begin());
    } else {
      loss = losses::downstream_loss<float>(y.data(), out.data(), valid.data(), n);
    }
    return static_cast<double>(loss);
  };

  auto train_epoch = [&](int epoch, Adam& opt) {
    const auto batches =
        make_batches(n_train, cfg.batch_size, base.derive("shuffle", static_cast<std::uint64_t>(epoch)));
    double acc = 0.0;
    long seen = 0;
    for (const auto& bidx : batches) {
      std::vector<const data::Patch*> batch;
      for (int i : bidx) batch.push_back(&pool.train[i]);
      params.zero_grad();
      Tensor dloss;
      const double loss = eval_batch(batch, nn::Mode::train, &dloss);
      model.backward(dloss, frozen_encoder);
      opt.step(params);
      acc += loss * static_cast<double>(batch.size());
      seen += static_cast<long>(batch.size());
    }
    return acc / static_cast<double>(seen);
  };

  auto val_fn = [&]() {
    double acc = 0.0;
    long seen = 0;
    for (size_t s = 0; s < pool.val.size(); s += cfg.batch_size) {
      std::vector<const data::Patch*> batch;
      for (size_t i = s; i < std::min(pool.val.size(), s + static_cast<size_t>(cfg.batch_size)); ++i)
        batch.push_back(&pool.val[i]);
      acc += eval_batch(batch, nn::Mode::eval, nullptr) * static_cast<double>(batch.size());
      seen += static_cast<long>(batch.size());
    }
    return acc / static_cast<double>(seen);
  };

  RunResult rr = run_loop(cfg, params, cfg.model, n_train, train_epoch, val_fn);
  rr.train_scene_ids = pool.train_scene_ids;
  return rr;
}

ReplicateOutcome run_replicates(const ExperimentConfig& cfg, int n,
                                const ExperimentConfig* pretext_template) {
  if (n < 1) throw ConfigError("replicates must be >= 1");
  ReplicateOutcome out;
  data::Manifest manifest = data::load_manifest(cfg.manifest_path);
  for (int i = 0; i < n; ++i) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
    run_cfg.out_dir = cfg.out_dir + "/rep" + std::to_string(i);
    if (cfg.task == "dst") {
      if (!pretext_template && cfg.init_checkpoint.empty())
        throw ConfigError("dst replicates need a pretext template or a fixed checkpoint");
      if (pretext_template) {
        ExperimentConfig pcfg = *pretext_template;
        pcfg.seed = run_cfg.seed;
        pcfg.out_dir = cfg.out_dir + "/rep" + std::to_string(i) + "_pretext";
        const RunResult pres = train_pretext(pcfg);
        run_cfg.init_checkpoint = pres.checkpoint_path;
      }
    }
    RunResult rr = (run_cfg.task == "ssl-id" || run_cfg.task == "ssl-in")
                       ? train_pretext(run_cfg)
                       : train_segmentation(run_cfg);
    if (run_cfg.task == "fsl" || run_cfg.task == "dst") {
      eval::EvalResult ev = eval::bucket_evaluate(rr.checkpoint_path, manifest);
      for (const auto& b : ev.buckets)
        if (b.n_pixels > 0) out.f1w[b.bucket_id].push_back(b.f1w);
      out.evals.push_back(std::move(ev));
    }
    out.runs.push_back(std::move(rr));
  }
  for (const auto& [bucket, vals] : out.f1w) out.f1w_mean[bucket] = eval::mean_of(vals);
  return out;
}

}  // namespace fmx::train
