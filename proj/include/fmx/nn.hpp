#pragma once

#include "fmx/params.hpp"
#include "fmx/tensor.hpp"

namespace fmx::nn {

enum class Mode { train, eval };

// Lowers conv patches of `img` [C x H x W] into `col` [C*kh*kw x Hout*Wout].
void im2col(const float* img, int c, int h, int w, int kh, int kw, int stride, int pad,
            float* col);
// Scatter-add inverse of im2col.
void col2im(const float* col, int c, int h, int w, int kh, int kw, int stride, int pad,
            float* img);

int conv_out_dim(int in, int k, int stride, int pad);

// 2D convolution, weight [Cout, Cin, k, k], bias [Cout].
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ModelParams* p, const std::string& prefix, int cin, int cout, int k, int stride,
         int pad);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);  // accumulates into param grads

  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  ModelParams* p_ = nullptr;
  int wi_ = -1, bi_ = -1;
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Tensor x_;  // cached input
};

// Transposed 2D convolution, weight [Cin, Cout, k, k], bias [Cout]. Output
// spatial size is (in-1)*stride - 2*pad + k + outpad.
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ModelParams* p, const std::string& prefix, int cin, int cout, int k, int stride,
                  int pad, int outpad);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  ModelParams* p_ = nullptr;
  int wi_ = -1, bi_ = -1;
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 2, pad_ = 0, outpad_ = 0;
  Tensor x_;
};

// Per-channel batch normalization. When the scale parameter is flagged
// non-trainable the layer runs in inference behavior even during training and
// never updates its running statistics (frozen-encoder contract).
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ModelParams* p, const std::string& prefix, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

 private:
  bool frozen() const;
  ModelParams* p_ = nullptr;
  int gi_ = -1, bi_ = -1, rmi_ = -1, rvi_ = -1;
  int channels_ = 0;
  Tensor x_;
  std::vector<float> mu_, var_;  // statistics used in the cached forward
  bool used_batch_stats_ = false;
};

class MaxPool2d {  // fixed 2x2, stride 2
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  std::vector<int> argmax_;
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_;
};

class Tanh {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int ca, Tensor& da, Tensor& db);

}  // namespace fmx::nn
