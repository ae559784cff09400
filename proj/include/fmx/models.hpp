#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fmx/nn.hpp"
#include "fmx/params.hpp"
#include "fmx/tensor.hpp"

namespace fmx::models {

struct EncoderSchema {
  int in_channels = 5;
  int base_filters = 64;
  int n_levels = 4;

  int level_filters(int level) const { return base_filters << level; }  // bottleneck = level n
  std::string hash() const;
  std::string to_json() const;
  static EncoderSchema from_json(const std::string& s);
  void validate(int input_px = 128) const;
};

enum class Trainability { encoder_and_decoder, decoder_only };
Trainability trainability_from_name(const std::string& s);  // "E+D" | "D"
const char* trainability_name(Trainability t);

// Contracting path shared by the CAE and the U-Net: per level two 3x3
// convolutions (BN + ReLU each) then 2x2 max-pooling, filters doubling per
// level, plus a two-convolution bottleneck block.
class Encoder {
 public:
  Encoder(const EncoderSchema& schema, ModelParams* params);

  // Returns the bottleneck features; per-level pre-pool activations are
  // appended to *skips when given.
  Tensor forward(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips);
  // dskips may be null (CAE). Returns dx.
  Tensor backward(const Tensor& d_bottleneck, const std::vector<Tensor>* dskips);

 private:
  struct Level {
    nn::Conv2d conv1, conv2;
    nn::BatchNorm2d bn1, bn2;
    nn::ReLU relu1, relu2;
    nn::MaxPool2d pool;
  };
  EncoderSchema schema_;
  std::vector<Level> levels_;
  nn::Conv2d bconv1_, bconv2_;
  nn::BatchNorm2d bbn1_, bbn2_;
  nn::ReLU brelu1_, brelu2_;
};

class Cae {
 public:
  Cae(const EncoderSchema& schema, ModelParams* params);

  Tensor forward(const Tensor& x, nn::Mode mode);
  Tensor backward(const Tensor& dy);
  // Encoder-only forward; used by the transfer-equivalence checks.
  Tensor encode(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips = nullptr);

 private:
  struct Stage {
    nn::ConvTranspose2d up;
    nn::BatchNorm2d bn;
    nn::ReLU relu;
  };
  EncoderSchema schema_;
  Encoder encoder_;
  std::vector<Stage> stages_;  // deepest first
  nn::Conv2d head_;
  nn::Tanh tanh_;
};

class UNet {
 public:
  UNet(const EncoderSchema& schema, ModelParams* params);

  Tensor forward(const Tensor& x, nn::Mode mode);
  // skip_encoder_grad skips the frozen encoder's backward pass (decoder-only
  // training); parameter gradients above the encoder are unaffected.
  Tensor backward(const Tensor& dy, bool skip_encoder_grad = false);
  Tensor encode(const Tensor& x, nn::Mode mode, std::vector<Tensor>* skips = nullptr);

 private:
  struct Stage {
    nn::ConvTranspose2d up;
    nn::BatchNorm2d bn0;
    nn::ReLU relu0;
    nn::Conv2d conv1, conv2;
    nn::BatchNorm2d bn1, bn2;
    nn::ReLU relu1, relu2;
    int skip_channels = 0;
  };
  EncoderSchema schema_;
  Encoder encoder_;
  std::vector<Stage> stages_;  // deepest first
  nn::Conv2d head_;
  nn::Sigmoid sigmoid_;
  std::vector<Tensor> skips_;
};

// Fresh parameter collections with deterministic fan-in-scaled uniform init.
ModelParams init_cae(const EncoderSchema& schema, std::uint64_t seed);
ModelParams init_unet(const EncoderSchema& schema, std::uint64_t seed);

inline constexpr const char* kEncoderPrefix = "enc.";

// Copies every encoder entry (weights and running statistics) from the CAE
// collection into the U-Net collection. Idempotent; decoder untouched.
void transfer_encoder(const ModelParams& cae, ModelParams& unet);

// decoder_only freezes all encoder entries (batch norm statistics included);
// encoder_and_decoder makes everything trainable.
void set_trainability(ModelParams& params, Trainability mode);

bool encoder_fully_frozen(const ModelParams& params);

}  // namespace fmx::models
