// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "snerv/autodiff.hpp"
#include "snerv/wavelet.hpp"

namespace snerv {

/// Gaussian SSIM window. The default is the standard 11-tap, sigma 1.5.
struct SsimWindow {
  int size = 11;
  double sigma = 1.5;

  /// The default window, shrunk to the largest odd size that fits when the
  /// image is smaller than 11 pixels (sigma scaled proportionally).
  static SsimWindow fit(Index height, Index width);
};

/// Mean single-scale SSIM over all valid window positions and channels,
/// with C1 = (0.01 peak)^2 and C2 = (0.03 peak)^2. Differentiable in both
/// arguments. Throws InputError when the image is smaller than the window.
template <typename Scalar>
Var<Scalar> ssim(const Var<Scalar>& x, const Var<Scalar>& y, double peak, SsimWindow window = {});

/// Value-only SSIM.
template <typename Scalar>
double ssim_value(const Tensor<Scalar>& x, const Tensor<Scalar>& y, double peak,
                  SsimWindow window = {});

/// 10 log10(peak^2 / MSE), capped at 100 dB. With `clamp`, both inputs are
/// first clamped to [0, peak] (frame metrics).
template <typename Scalar>
double psnr(const Tensor<Scalar>& x, const Tensor<Scalar>& y, double peak = 1.0,
            bool clamp = true);

/// SSIM of frames clamped to [0, 1].
template <typename Scalar>
double frame_ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& y);

inline constexpr double kDefaultAlpha = 0.7;

/// alpha * mean|pred - truth| + (1 - alpha) * (1 - SSIM(pred, truth)).
template <typename Scalar>
Var<Scalar> frame_loss(const Var<Scalar>& pred, const Var<Scalar>& truth,
                       double alpha = kDefaultAlpha, double peak = 1.0);

struct LossBreakdown {
  double frame_loss = 0;
  double coeff_loss = 0;
  double total = 0;
  std::array<double, 4> per_band{};
};

template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  LossBreakdown breakdown;
};

/// Frame term (peak 1) plus the mean over the four bands of the coefficient
/// term (peak 2). `truth_bands` must be dwt2_haar(truth_frame). With
/// `use_coeff_loss == false` the coefficient term is dropped.
template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& pred_frame, const Tensor<Scalar>& truth_frame,
                             const SubbandVars<Scalar>& pred_bands,
                             const Subbands<Scalar>& truth_bands, double alpha = kDefaultAlpha,
                             bool use_coeff_loss = true);

}  // namespace snerv
