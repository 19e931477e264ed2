// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "snerv/autodiff.hpp"

namespace snerv {

/// One-level orthonormal Haar sub-bands of a [C, H, W] frame, each
/// [C, H/2, W/2].
///
/// Band convention (rows filtered first, then columns). For a 2x2 block
/// [[a, b], [c, d]]:
///   ll = (a + b + c + d) / 2
///   lh = (a + b - c - d) / 2   low-pass along rows, high-pass down columns:
///                              responds to horizontal edges
///   hl = (a - b + c - d) / 2   responds to vertical edges
///   hh = (a - b - c + d) / 2   diagonal detail
template <typename Scalar>
struct Subbands {
  Tensor<Scalar> ll, lh, hl, hh;

  const Tensor<Scalar>& band(int i) const;
  Tensor<Scalar>& band(int i);
};

/// Peak used for every wavelet-domain metric: one-level Haar on [0,1] pixels
/// keeps each coefficient inside an interval of width 2.
inline constexpr double kCoefficientPeak = 2.0;

template <typename Scalar>
Subbands<Scalar> dwt2_haar(const Tensor<Scalar>& frame);

template <typename Scalar>
Tensor<Scalar> idwt2_haar(const Subbands<Scalar>& bands);

/// Temporal Haar step on two co-located planes: lf = (a+b)/sqrt2, hf = (a-b)/sqrt2.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> dwt_temporal_pair(const Tensor<Scalar>& a,
                                                            const Tensor<Scalar>& b);

struct BandPsnr {
  double ll = 0, lh = 0, hl = 0, hh = 0;
  /// Mean of the three detail-band PSNRs.
  double hf() const { return (lh + hl + hh) / 3.0; }
};

/// Per-band PSNR with peak kCoefficientPeak, capped at 100 dB.
template <typename Scalar>
BandPsnr subband_psnr(const Subbands<Scalar>& pred, const Subbands<Scalar>& truth);

/// Graph-side sub-bands.
template <typename Scalar>
struct SubbandVars {
  Var<Scalar> ll, lh, hl, hh;

  const Var<Scalar>& band(int i) const;
  Subbands<Scalar> values() const { return {ll.value(), lh.value(), hl.value(), hh.value()}; }
};

/// Differentiable synthesis; forward is exactly idwt2_haar on the values.
template <typename Scalar>
Var<Scalar> idwt2_haar(const SubbandVars<Scalar>& bands);

/// Differentiable analysis; forward is exactly dwt2_haar on the value.
template <typename Scalar>
SubbandVars<Scalar> dwt2_haar(const Var<Scalar>& frame);

}  // namespace snerv
