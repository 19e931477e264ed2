// SPDX-License-Identifier: Apache-2.0
#include "snerv/optim.hpp"

#include <cmath>
#include <numbers>

namespace snerv {

template <typename Scalar>
OptimState<Scalar>::OptimState(const ParameterSet<Scalar>& params, double lr, long total)
    : lr_base(lr), total_steps(total) {
  if (total < 1) throw ConfigError("total_steps must be positive");
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params.all()) {
    m.push_back(Vec<Scalar>::Zero(p.size()));
    v.push_back(Vec<Scalar>::Zero(p.size()));
  }
}

template <typename Scalar>
void adam_step(OptimState<Scalar>& state, ParameterSet<Scalar>& params, double lr,
               const AdamHyper& hyper) {
  auto& all = params.all();
  if (state.m.size() != all.size() || state.v.size() != all.size()) {
    throw UsageError("optimizer state does not match the parameter set");
  }
  for (const auto& p : all) {
    if (p.grad().size() != p.size()) {
      throw UsageError("parameter '" + p.name() + "' has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(hyper.beta1);
  const Scalar b2 = static_cast<Scalar>(hyper.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(hyper.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(hyper.beta2, t));
  const Scalar rate = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(hyper.eps);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = all[i];
    Vec<Scalar>& g = p.grad();
    Vec<Scalar>& m = state.m[i];
    Vec<Scalar>& v = state.v[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    p.mutable_value().data.array() -=
        rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    g.setZero();
  }
}

double cosine_lr(long step, long total_steps, double lr_base, long warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr_base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const long span = total_steps - warmup_steps;
  if (span <= 0) return lr_base;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return lr_base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename Scalar>
double grad_norm(const ParameterSet<Scalar>& params) {
  double acc = 0.0;
  for (const auto& p : params.all()) {
    if (p.grad().size()) acc += p.grad().template cast<double>().squaredNorm();
  }
  return std::sqrt(acc);
}

template <typename Scalar>
void clip_grad_norm(ParameterSet<Scalar>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (!(norm > max_norm) || norm == 0.0) return;
  const Scalar factor = static_cast<Scalar>(max_norm / norm);
  for (auto& p : params.all()) p.grad() *= factor;
}

#define SNERV_INSTANTIATE(S)                                                   \
  template struct OptimState<S>;                                               \
  template void adam_step<S>(OptimState<S>&, ParameterSet<S>&, double, const AdamHyper&); \
  template double grad_norm<S>(const ParameterSet<S>&);                        \
  template void clip_grad_norm<S>(ParameterSet<S>&, double);

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
