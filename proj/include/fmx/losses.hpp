#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fmx/common.hpp"

namespace fmx::losses {

inline constexpr double kWRec = 0.99;
inline constexpr double kProbEps = 1e-7;

// 128x128 binary mask with a 64x64 hole: 0 inside the hole, 1 outside.
// Masked fraction is exactly 0.25 for every valid placement.
struct MaskSpec {
  static constexpr int kSize = 128;
  static constexpr int kHole = 64;
  int r0 = 0, c0 = 0;

  bool inside_hole(int r, int c) const {
    return r >= r0 && r < r0 + kHole && c >= c0 && c < c0 + kHole;
  }
  Raster<std::uint8_t> to_raster() const {
    Raster<std::uint8_t> m(kSize, kSize, 1);
    for (int r = r0; r < r0 + kHole; ++r)
      for (int c = c0; c < c0 + kHole; ++c) m(r, c) = 0;
    return m;
  }
};

// Hole placement uniform over all positions that keep it fully inside.
inline MaskSpec sample_mask(Rng& rng) {
  MaskSpec m;
  m.r0 = static_cast<int>(rng.uniform_int(0, MaskSpec::kSize - MaskSpec::kHole));
  m.c0 = static_cast<int>(rng.uniform_int(0, MaskSpec::kSize - MaskSpec::kHole));
  return m;
}

inline MaskSpec sample_mask(std::uint64_t seed) {
  Rng rng(seed);
  return sample_mask(rng);
}

// x_hat = M (x); zeroes every channel inside the hole.
template <typename T>
void apply_mask(T* chw, int channels, const MaskSpec& m) {
  for (int ch = 0; ch < channels; ++ch) {
    T* plane = chw + static_cast<long>(ch) * MaskSpec::kSize * MaskSpec::kSize;
    for (int r = m.r0; r < m.r0 + MaskSpec::kHole; ++r)
      for (int c = m.c0; c < m.c0 + MaskSpec::kHole; ++c)
        plane[static_cast<long>(r) * MaskSpec::kSize + c] = T(0);
  }
}

// All losses reduce over valid elements only; `valid` is element-aligned
// (callers tile per-pixel masks across channels) and may be null for
// all-valid. Gradients are written with respect to the prediction argument
// and are zero on invalid elements.

// Two-term reconstruction loss: mean absolute error plus the root of the
// mean squared error.
template <typename T>
T identity_loss(const T* x, const T* fx, const std::uint8_t* valid, long n, T* grad_fx = nullptr) {
  long nv = 0;
  for (long i = 0; i < n; ++i) nv += (!valid || valid[i]) ? 1 : 0;
  if (nv == 0) throw ValidationError("identity_loss: no valid elements");

  T abs_sum = 0, sq_sum = 0;
  for (long i = 0; i < n; ++i) {
    if (valid && !valid[i]) continue;
    const T e = x[i] - fx[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const T l1 = abs_sum / static_cast<T>(nv);
  const T l2 = std::sqrt(sq_sum / static_cast<T>(nv));

  if (grad_fx) {
    for (long i = 0; i < n; ++i) {
      if (valid && !valid[i]) {
        grad_fx[i] = 0;
        continue;
      }
      const T e = x[i] - fx[i];
      T g = 0;
      if (e > 0)
        g -= T(1) / static_cast<T>(nv);
      else if (e < 0)
        g += T(1) / static_cast<T>(nv);
      if (l2 > 0) g -= e / (static_cast<T>(nv) * l2);
      grad_fx[i] = g;
    }
  }
  return l1 + l2;
}

// w_rec * L_rec + (1 - w_rec) * L_con: masked-area mean squared error plus
// the unmasked-area one, each normalized by its own element count. `mask` is
// element-aligned, 0 inside the hole.
template <typename T>
T inpainting_loss(const T* x, const T* pred, const std::uint8_t* mask, const std::uint8_t* valid,
                  long n, T w_rec = T(kWRec), T* grad_pred = nullptr) {
  long masked = 0, unmasked = 0;
  for (long i = 0; i < n; ++i) (mask[i] ? unmasked : masked)++;
  if (masked == 0 || unmasked == 0)
    throw ValidationError("inpainting_loss: degenerate mask (all ones or all zeros)");

  long n_rec = 0, n_con = 0;
  for (long i = 0; i < n; ++i) {
    if (valid && !valid[i]) continue;
    (mask[i] ? n_con : n_rec)++;
  }
  if (n_rec == 0 || n_con == 0)
    throw ValidationError("inpainting_loss: mask degenerate after validity filtering");

  T rec = 0, con = 0;
  for (long i = 0; i < n; ++i) {
    if (valid && !valid[i]) continue;
    const T e = x[i] - pred[i];
    if (mask[i])
      con += e * e;
    else
      rec += e * e;
  }
  rec /= static_cast<T>(n_rec);
  con /= static_cast<T>(n_con);

  if (grad_pred) {
    for (long i = 0; i < n; ++i) {
      if (valid && !valid[i]) {
        grad_pred[i] = 0;
        continue;
      }
      const T e = x[i] - pred[i];
      grad_pred[i] = mask[i] ? (T(1) - w_rec) * T(-2) * e / static_cast<T>(n_con)
                             : w_rec * T(-2) * e / static_cast<T>(n_rec);
    }
  }
  return w_rec * rec + (T(1) - w_rec) * con;
}

// Mean over valid pixels of -(y log p + (1-y) log(1-p)); probabilities are
// clamped to [1e-7, 1 - 1e-7].
template <typename T>
T bce_loss(const T* y, const T* p, const std::uint8_t* valid, long n, T* grad_p = nullptr) {
  long nv = 0;
  for (long i = 0; i < n; ++i) nv += (!valid || valid[i]) ? 1 : 0;
  if (nv == 0) throw ValidationError("bce_loss: no valid pixels");
  const T eps = static_cast<T>(kProbEps);
  T acc = 0;
  for (long i = 0; i < n; ++i) {
    if (valid && !valid[i]) {
      if (grad_p) grad_p[i] = 0;
      continue;
    }
    const T pc = std::clamp(p[i], eps, T(1) - eps);
    acc -= y[i] * std::log(pc) + (T(1) - y[i]) * std::log(T(1) - pc);
    if (grad_p) {
      const bool clamped = p[i] < eps || p[i] > T(1) - eps;
      grad_p[i] = clamped ? T(0) : -(y[i] / pc - (T(1) - y[i]) / (T(1) - pc)) / static_cast<T>(nv);
    }
  }
  return acc / static_cast<T>(nv);
}

// 1 - (2*sum(y*p) + 1) / (sum(y) + sum(p) + 1), sums over valid pixels.
template <typename T>
T dice_loss(const T* y, const T* p, const std::uint8_t* valid, long n, T* grad_p = nullptr) {
  T inter = 0, sy = 0, sp = 0;
  for (long i = 0; i < n; ++i) {
    if (valid && !valid[i]) continue;
    inter += y[i] * p[i];
    sy += y[i];
    sp += p[i];
  }
  const T denom = sy + sp + T(1);
  if (grad_p) {
    const T numer = T(2) * inter + T(1);
    for (long i = 0; i < n; ++i) {
      if (valid && !valid[i]) {
        grad_p[i] = 0;
        continue;
      }
      grad_p[i] = -(T(2) * y[i] * denom - numer) / (denom * denom);
    }
  }
  return T(1) - (T(2) * inter + T(1)) / denom;
}

// BCE + dice.
template <typename T>
T downstream_loss(const T* y, const T* p, const std::uint8_t* valid, long n,
                  T* grad_p = nullptr) {
  if (!grad_p) return bce_loss<T>(y, p, valid, n) + dice_loss<T>(y, p, valid, n);
  std::vector<T> g2(static_cast<size_t>(n), T(0));
  const T b = bce_loss<T>(y, p, valid, n, grad_p);
  const T d = dice_loss<T>(y, p, valid, n, g2.data());
  for (long i = 0; i < n; ++i) grad_p[i] += g2[i];
  return b + d;
}

}  // namespace fmx::losses
