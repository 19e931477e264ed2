// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "snerv/autodiff.hpp"

namespace snerv {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers for one registered parameter list.
template <typename Scalar>
struct OptimState {
  long step = 0;
  std::vector<Vec<Scalar>> m;
  std::vector<Vec<Scalar>> v;
  double lr_base = 1e-3;
  long total_steps = 1;

  OptimState() = default;
  OptimState(const ParameterSet<Scalar>& params, double lr, long total);
};

/// Bias-corrected Adam update; zeroes every grad afterwards.
template <typename Scalar>
void adam_step(OptimState<Scalar>& state, ParameterSet<Scalar>& params, double lr,
               const AdamHyper& hyper = {});

/// Linear warmup to lr_base, then half-cosine decay to 0 at total_steps.
double cosine_lr(long step, long total_steps, double lr_base, long warmup_steps = 0);

/// L2 norm over all parameter grads.
template <typename Scalar>
double grad_norm(const ParameterSet<Scalar>& params);

/// Rescales grads so their global norm is at most max_norm.
template <typename Scalar>
void clip_grad_norm(ParameterSet<Scalar>& params, double max_norm);

}  // namespace snerv
