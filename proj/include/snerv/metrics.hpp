// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

namespace snerv {

/// Reported PSNR for identical signals.
inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse, double peak) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace snerv
