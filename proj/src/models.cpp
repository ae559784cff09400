#include "fmx/models.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "fmx/common.hpp"

namespace fmx::models {

using nlohmann::json;

std::string EncoderSchema::hash() const {
  const std::string canon = "in=" + std::to_string(in_channels) +
                            ";base=" + std::to_string(base_filters) +
                            ";levels=" + std::to_string(n_levels);
  return to_hex(fnv1a64(canon));
}

std::string EncoderSchema::to_json() const {
  json j{{"in_channels", in_channels}, {"base_filters", base_filters}, {"n_levels", n_levels}};
  return j.dump();
}

EncoderSchema EncoderSchema::from_json(const std::string& s) {
  json j = json::parse(s);
  EncoderSchema e;
  e.in_channels = j.at("in_channels").get<int>();
  e.base_filters = j.at("base_filters").get<int>();
  e.n_levels = j.at("n_levels").get<int>();
  return e;
}

void EncoderSchema::validate(int input_px) const {
  if (in_channels <= 0 || base_filters <= 0 || n_levels <= 0)
    throw ConfigError("encoder schema fields must be positive");
  if (input_px % (1 << n_levels) != 0)
    throw ConfigError("input size must be divisible by 2^n_levels");
}

Trainability trainability_from_name(const std::string& s) {
  if (s == "E+D") return Trainability::encoder_and_decoder;
  if (s == "D") return Trainability::decoder_only;
  throw ConfigError("unknown trainability mode: " + s + " (expected E+D or D)");
}

const char* trainability_name(Trainability t) {
  return t == Trainability::encoder_and_decoder ? "E+D" : "D";
}

Encoder::Encoder(const EncoderSchema& schema, ModelParams* p) : schema_(schema) {
  levels_.resize(schema.n_levels);
  int cin = schema.in_channels;
  for (int k = 0; k < schema.n_levels; ++k) {
    const int f = schema.level_filters(k);
    const std::string base = std::string(kEncoderPrefix) + "l" + std::to_string(k);
    levels_[k].conv1 = nn::Conv2d(p, base + ".conv1", cin, f, 3, 1, 1);
    levels_[k].bn1 = nn::BatchNorm2d(p, base + ".bn1", f);
    levels_[k].conv2 = nn::Conv2d(p, base + ".conv2", f, f, 3, 1, 1);
    levels_[k].bn2 = nn::BatchNorm2d(p, base + ".bn2", f);
    cin = f;
  }
  const int fb = schema.level_filters(schema.n_levels);
  const std::string base = std::string(kEncoderPrefix) + "bottleneck";
  bconv1_ = nn::Conv2d(p, base + ".conv1", cin, fb, 3, 1, 1);
  bbn1_ = nn::BatchNorm2d(p, base + ".bn1", fb);
  bconv2_ = nn::Conv2d(p, base + ".conv2", fb, fb, 3, 1, 1);
  bbn2_ = nn::BatchNorm2d(p, base + ".bn2", fb);
}

Tensor Encoder::forward(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips) {
  if (skips) skips->clear();
  Tensor t = x;
  for (auto& lv : levels_) {
    t = lv.relu1.forward(lv.bn1.forward(lv.conv1.forward(t), mode));
    t = lv.relu2.forward(lv.bn2.forward(lv.conv2.forward(t), mode));
    if (skips) skips->push_back(t);
    t = lv.pool.forward(t);
  }
  t = brelu1_.forward(bbn1_.forward(bconv1_.forward(t), mode));
  t = brelu2_.forward(bbn2_.forward(bconv2_.forward(t), mode));
  return t;
}

Tensor Encoder::backward(const Tensor& d_bottleneck, const std::vector<Tensor>* dskips) {
  Tensor d = bconv1_.backward(bbn1_.backward(brelu1_.backward(
      bconv2_.backward(bbn2_.backward(brelu2_.backward(d_bottleneck))))));
  for (int k = schema_.n_levels - 1; k >= 0; --k) {
    auto& lv = levels_[k];
    d = lv.pool.backward(d);
    if (dskips && !(*dskips)[k].v.empty()) {
      const Tensor& ds = (*dskips)[k];
      for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += ds.v[i];
    }
    d = lv.conv2.backward(lv.bn2.backward(lv.relu2.backward(d)));
    d = lv.conv1.backward(lv.bn1.backward(lv.relu1.backward(d)));
  }
  return d;
}

Cae::Cae(const EncoderSchema& schema, ModelParams* p) : schema_(schema), encoder_(schema, p) {
  stages_.resize(schema.n_levels);
  for (int k = schema.n_levels - 1; k >= 0; --k) {
    const int cin = schema.level_filters(k + 1);
    const int cout = schema.level_filters(k);
    const std::string base = "caedec.l" + std::to_string(k);
    auto& st = stages_[schema.n_levels - 1 - k];
    st.up = nn::ConvTranspose2d(p, base + ".up", cin, cout, 3, 2, 1, 1);
    st.bn = nn::BatchNorm2d(p, base + ".bn", cout);
  }
  head_ = nn::Conv2d(p, "caedec.head", schema.base_filters, schema.in_channels, 3, 1, 1);
}

Tensor Cae::encode(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips) {
  return encoder_.forward(x, mode, skips);
}

Tensor Cae::forward(const Tensor& x, nn::Mode mode) {
  Tensor t = encoder_.forward(x, mode, nullptr);
  for (auto& st : stages_) t = st.relu.forward(st.bn.forward(st.up.forward(t), mode));
  return tanh_.forward(head_.forward(t));
}

Tensor Cae::backward(const Tensor& dy) {
  Tensor d = head_.backward(tanh_.backward(dy));
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
    d = it->up.backward(it->bn.backward(it->relu.backward(d)));
  return encoder_.backward(d, nullptr);
}

UNet::UNet(const EncoderSchema& schema, ModelParams* p) : schema_(schema), encoder_(schema, p) {
  stages_.resize(schema.n_levels);
  for (int k = schema.n_levels - 1; k >= 0; --k) {
    const int cin = schema.level_filters(k + 1);
    const int cout = schema.level_filters(k);
    const std::string base = "dec.l" + std::to_string(k);
    auto& st = stages_[schema.n_levels - 1 - k];
    st.skip_channels = cout;
    st.up = nn::ConvTranspose2d(p, base + ".up", cin, cout, 2, 2, 0, 0);
    st.bn0 = nn::BatchNorm2d(p, base + ".bn0", cout);
    st.conv1 = nn::Conv2d(p, base + ".conv1", 2 * cout, cout, 3, 1, 1);
    st.bn1 = nn::BatchNorm2d(p, base + ".bn1", cout);
    st.conv2 = nn::Conv2d(p, base + ".conv2", cout, cout, 3, 1, 1);
    st.bn2 = nn::BatchNorm2d(p, base + ".bn2", cout);
  }
  head_ = nn::Conv2d(p, "dec.head", schema.base_filters, 1, 1, 1, 0);
}

Tensor UNet::encode(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips) {
  return encoder_.forward(x, mode, skips);
}

Tensor UNet::forward(const Tensor& x, nn::Mode mode) {
  Tensor t = encoder_.forward(x, mode, &skips_);
  for (int s = 0; s < static_cast<int>(stages_.size()); ++s) {
    auto& st = stages_[s];
    const int level = schema_.n_levels - 1 - s;
    t = st.relu0.forward(st.bn0.forward(st.up.forward(t), mode));
    t = nn::concat_channels(t, skips_[level]);
    t = st.relu1.forward(st.bn1.forward(st.conv1.forward(t), mode));
    t = st.relu2.forward(st.bn2.forward(st.conv2.forward(t), mode));
  }
  return sigmoid_.forward(head_.forward(t));
}

Tensor UNet::backward(const Tensor& dy, bool skip_encoder_grad) {
  Tensor d = head_.backward(sigmoid_.backward(dy));
  std::vector<Tensor> dskips(schema_.n_levels);
  for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
    auto& st = stages_[s];
    const int level = schema_.n_levels - 1 - s;
    d = st.conv1.backward(st.bn1.backward(st.relu1.backward(
        st.conv2.backward(st.bn2.backward(st.relu2.backward(d))))));
    Tensor dup, dskip;
    nn::split_channels(d, st.skip_channels, dup, dskip);
    dskips[level] = std::move(dskip);
    d = st.up.backward(st.bn0.backward(st.relu0.backward(dup)));
  }
  if (skip_encoder_grad) return Tensor();
  return encoder_.backward(d, &dskips);
}

namespace {

// Fan-in-scaled uniform init for convolution weights and biases; batch norm
// starts at scale 1 / shift 0 with unit running variance.
void init_params(ModelParams& p, const EncoderSchema& schema, std::uint64_t seed,
                 const std::string& model_tag) {
  Rng base = Rng(seed).derive("init:" + model_tag);
  for (auto& e : p.entries) {
    Rng rng = base.derive(e.key);
    const bool is_weight = e.key.ends_with(".w");
    const bool is_bias = e.key.ends_with(".b");
    if (is_weight || is_bias) {
      // conv weights are [cout, cin, k, k], transposed ones [cin, cout, k, k];
      // fan-in = cin * k * k in both layouts
      const auto& we = is_weight ? e : p.at(e.key.substr(0, e.key.size() - 2) + ".w");
      const bool transposed = e.key.find(".up.") != std::string::npos;
      const long fan_in = transposed ? static_cast<long>(we.shape[0]) * we.shape[2] * we.shape[3]
                                     : we.count() / we.shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : e.value) v = static_cast<float>(rng.uniform(-bound, bound));
    } else if (e.key.ends_with(".gamma") || e.key.ends_with(".running_var")) {
      std::fill(e.value.begin(), e.value.end(), 1.0f);
    } else {
      std::fill(e.value.begin(), e.value.end(), 0.0f);
    }
  }
  p.schema_hash = schema.hash();
  p.seed = seed;
}

}  // namespace

ModelParams init_cae(const EncoderSchema& schema, std::uint64_t seed) {
  schema.validate();
  ModelParams p;
  Cae model(schema, &p);  // wires parameter entries
  init_params(p, schema, seed, "cae");
  return p;
}

ModelParams init_unet(const EncoderSchema& schema, std::uint64_t seed) {
  schema.validate();
  ModelParams p;
  UNet model(schema, &p);
  init_params(p, schema, seed, "unet");
  return p;
}

void transfer_encoder(const ModelParams& cae, ModelParams& unet) {
  if (cae.schema_hash != unet.schema_hash)
    throw ValidationError("transfer_encoder: schema hash mismatch (" + cae.schema_hash + " vs " +
                          unet.schema_hash + ")");
  for (const auto& e : cae.entries) {
    if (!e.key.starts_with(kEncoderPrefix)) continue;
    auto& dst = unet.at(e.key);
    if (dst.shape != e.shape)
      throw ValidationError("transfer_encoder: shape mismatch on " + e.key);
    dst.value = e.value;
  }
}

void set_trainability(ModelParams& params, Trainability mode) {
  for (auto& e : params.entries) {
    if (e.is_buffer) continue;
    if (mode == Trainability::decoder_only && e.key.starts_with(kEncoderPrefix))
      e.trainable = false;
    else
      e.trainable = true;
  }
}

bool encoder_fully_frozen(const ModelParams& params) {
  for (const auto& e : params.entries)
    if (!e.is_buffer && e.key.starts_with(kEncoderPrefix) && e.trainable) return false;
  return true;
}

}  // namespace fmx::models
