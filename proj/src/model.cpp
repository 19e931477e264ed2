// SPDX-License-Identifier: Apache-2.0
#include "snerv/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "snerv/ops.hpp"

namespace snerv {

namespace {

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Rng& rng, Shape shape, double bound) {
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return t;
}

template <typename Scalar>
std::vector<Var<Scalar>> split_streams(const Var<Scalar>& x, int count) {
  const Index c = x.shape()[0] / count;
  std::vector<Var<Scalar>> out;
  for (int i = 0; i < count; ++i) out.push_back(slice_channels(x, i * c, c));
  return out;
}

template <typename Scalar>
Var<Scalar> stack(const std::vector<Var<Scalar>>& xs) {
  Var<Scalar> out = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) out = concat_channels(out, xs[i]);
  return out;
}

// Applies one 3-tap-in-time filter: out_j = sum_tau f[tau](x_{j+tau-1}).
// With `valid`, only the centre output (j = 1) is produced.
template <typename Scalar, typename Layer>
std::vector<Var<Scalar>> time_filter(const std::vector<Layer>& taps,
                                     const std::vector<Var<Scalar>>& x, bool valid) {
  std::vector<Var<Scalar>> out;
  const int first = valid ? 1 : 0, end = valid ? 2 : 3;
  for (int j = first; j < end; ++j) {
    Var<Scalar> acc;
    for (int tau = 0; tau < 3; ++tau) {
      const int src = j + tau - 1;
      if (src < 0 || src > 2) continue;
      Var<Scalar> y = taps[tau](x[src]);
      acc = acc.defined() ? add(acc, y) : y;
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace

template <typename Scalar>
Conv2d<Scalar>::Conv2d(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int cin,
                       int cout, int kernel, int stride_, int pad_, bool with_bias,
                       int fan_in_taps)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * kernel * kernel * fan_in_taps);
  weight = ps.add(name + ".w", uniform_tensor<Scalar>(rng, {cout, cin, kernel, kernel}, bound));
  if (with_bias) bias = ps.add(name + ".b", uniform_tensor<Scalar>(rng, {cout}, bound));
}

template <typename Scalar>
Var<Scalar> Conv2d<Scalar>::operator()(const Var<Scalar>& x) const {
  return conv2d(x, weight, bias, stride, pad);
}

template <typename Scalar>
ConvTranspose2d<Scalar>::ConvTranspose2d(ParameterSet<Scalar>& ps, Rng& rng,
                                         const std::string& name, int cin, int cout,
                                         int stride_, bool with_bias, int fan_in_taps)
    : stride(stride_), pad(1) {
  const int k = stride + 2;
  // Same convention as torch: fan-in of a transposed kernel is weight.size(1) * k * k.
  const double bound = 1.0 / std::sqrt(static_cast<double>(cout) * k * k * fan_in_taps);
  weight = ps.add(name + ".w", uniform_tensor<Scalar>(rng, {cin, cout, k, k}, bound));
  if (with_bias) bias = ps.add(name + ".b", uniform_tensor<Scalar>(rng, {cout}, bound));
}

template <typename Scalar>
Var<Scalar> ConvTranspose2d<Scalar>::operator()(const Var<Scalar>& x) const {
  return conv_transpose2d(x, weight, bias, stride, pad);
}

template <typename Scalar>
ResBlock<Scalar>::ResBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
                           int channels, Scalar slope_)
    : a(ps, rng, name + ".a", channels, channels, 3, 1, 1),
      b(ps, rng, name + ".b", channels, channels, 3, 1, 1),
      slope(slope_) {}

template <typename Scalar>
Var<Scalar> ResBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  return add(x, b(leaky_relu(a(x), slope)));
}

template <typename Scalar>
UpBlock<Scalar>::UpBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
                         int cin, int cout, int factor_, Scalar slope_)
    : conv(ps, rng, name, cin, cout * factor_ * factor_, 3, 1, 1), factor(factor_), slope(slope_) {}

template <typename Scalar>
Var<Scalar> UpBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  return leaky_relu(pixel_shuffle(conv(x), factor), slope);
}

template <typename Scalar>
FusionBlock<Scalar>::FusionBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
                                 int m_channels, int u_channels, int stride, int n_rb,
                                 Scalar slope) {
  const int half = std::max(m_channels / 2, 1);
  up = ConvTranspose2d<Scalar>(ps, rng, name + ".up", m_channels, half, stride);
  fuse = Conv2d<Scalar>(ps, rng, name + ".fuse", half + u_channels, u_channels, 1, 1, 0);
  for (int j = 0; j < n_rb; ++j) {
    rbs.emplace_back(ps, rng, name + ".rb" + std::to_string(j), u_channels, slope);
  }
}

template <typename Scalar>
Var<Scalar> FusionBlock<Scalar>::operator()(const Var<Scalar>& m, const Var<Scalar>& u) const {
  Var<Scalar> lifted = up(m);
  if (lifted.shape()[1] != u.shape()[1] || lifted.shape()[2] != u.shape()[2]) {
    throw ConfigError("MFU: up-sampled feature " + to_string(lifted.shape()) +
                      " does not align with UB output " + to_string(u.shape()));
  }
  Var<Scalar> x = fuse(concat_channels(lifted, u));
  for (const auto& rb : rbs) x = rb(x);
  return x;
}

template <typename Scalar>
ConvEncoder<Scalar>::ConvEncoder(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
                                 const std::vector<int>& strides, int width, int out_channels,
                                 Scalar slope_)
    : slope(slope_) {
  int cin = 3;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    stages.emplace_back(ps, rng, name + ".db" + std::to_string(i), cin, width, 3, strides[i], 1);
    cin = width;
  }
  proj = Conv2d<Scalar>(ps, rng, name + ".proj", cin, out_channels, 1, 1, 0);
}

template <typename Scalar>
Var<Scalar> ConvEncoder<Scalar>::operator()(const Var<Scalar>& x) const {
  Var<Scalar> h = x;
  for (const auto& s : stages) h = leaky_relu(s(h), slope);
  return proj(h);
}

template <typename Scalar>
TemporalUpBlock<Scalar>::TemporalUpBlock(ParameterSet<Scalar>& ps, Rng& rng,
                                         const std::string& name, TemporalBlock kind_, int cin,
                                         int cout_, int stride, bool last_, Scalar slope_)
    : kind(kind_), last(last_), cout(cout_), slope(slope_) {
  const int streams_out = last ? 1 : 3;
  switch (kind) {
    case TemporalBlock::kTub2d:
      up.emplace_back(ps, rng, name + ".up", 3 * cin, 3 * cout, stride);
      c1.emplace_back(ps, rng, name + ".c1", 3 * cout, 6 * cout, 3, 1, 1);
      c2.emplace_back(ps, rng, name + ".c2", 6 * cout, streams_out * cout, 3, 1, 1);
      break;
    case TemporalBlock::kTub3d:
      for (int tau = 0; tau < 3; ++tau) {
        const std::string t = ".t" + std::to_string(tau);
        const bool b = tau == 1;
        up.emplace_back(ps, rng, name + ".up" + t, cin, cout, stride, b, 3);
        c1.emplace_back(ps, rng, name + ".c1" + t, cout, 2 * cout, 3, 1, 1, b, 3);
        c2.emplace_back(ps, rng, name + ".c2" + t, 2 * cout, cout, 3, 1, 1, b, 3);
      }
      break;
    case TemporalBlock::kNerv:
      nerv = UpBlock<Scalar>(ps, rng, name + ".ub", 3 * cin, streams_out * cout, stride, slope);
      break;
  }
}

template <typename Scalar>
std::vector<Var<Scalar>> TemporalUpBlock<Scalar>::operator()(
    const std::vector<Var<Scalar>>& streams) const {
  if (streams.size() != 3) throw InputError("TUB expects three streams");
  for (const auto& s : streams) {
    if (s.shape() != streams[1].shape()) {
      throw InputError("TUB stream shape mismatch: " + to_string(s.shape()) + " vs " +
                       to_string(streams[1].shape()));
    }
  }
  const int n_out = last ? 1 : 3;
  switch (kind) {
    case TemporalBlock::kTub2d: {
      Var<Scalar> x = up[0](stack(streams));
      x = leaky_relu(c1[0](x), slope);
      x = c2[0](x);
      return split_streams(x, n_out);
    }
    case TemporalBlock::kTub3d: {
      auto x = time_filter<Scalar>(up, streams, false);
      x = time_filter<Scalar>(c1, x, false);
      for (auto& v : x) v = leaky_relu(v, slope);
      return time_filter<Scalar>(c2, x, last);
    }
    case TemporalBlock::kNerv:
      return split_streams(nerv(stack(streams)), n_out);
  }
  return {};
}

template <typename Scalar>
SnervModel<Scalar>::SnervModel(const ModelConfig& cfg)
    : cfg_(cfg), slope_(static_cast<Scalar>(cfg.leaky_slope)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const auto sched = channel_schedule(cfg_);
  const auto& s = cfg_.strides;

  std::vector<int> enc_strides(s.rbegin(), s.rend());
  encoder_ = ConvEncoder<Scalar>(params_, rng, "encoder", enc_strides, cfg_.encoder_width,
                                 cfg_.embed_channels, slope_);
  if (cfg_.temporal) {
    tencoder_ = ConvEncoder<Scalar>(params_, rng, "tencoder", cfg_.temporal_encoder_strides,
                                    cfg_.temporal_encoder_width, 3, slope_);
  }

  const int n_ub = cfg_.temporal ? 2 : 5;
  for (int i = 0; i < n_ub; ++i) {
    ubs_.emplace_back(params_, rng, "decoder.ub" + std::to_string(i), sched[i].first,
                      sched[i].second, s[i], slope_);
  }
  if (cfg_.temporal) {
    const int c1 = sched[1].second;
    stream_lift_ = Conv2d<Scalar>(params_, rng, "decoder.stream.lift", 3, c1, 3, 1, 1);
    for (int j = 0; j < 2; ++j) {
      stream_rbs_.emplace_back(params_, rng, "decoder.stream.rb" + std::to_string(j), c1, slope_);
    }
    const Index jh = cfg_.embed_h * s[0] * s[1];
    if (jh > cfg_.temporal_h) {
      stream_resample_ = static_cast<int>(jh / cfg_.temporal_h);
      stream_up_ = ConvTranspose2d<Scalar>(params_, rng, "decoder.stream.up", c1, c1,
                                           stream_resample_);
    } else if (jh < cfg_.temporal_h) {
      stream_resample_ = -static_cast<int>(cfg_.temporal_h / jh);
      stream_down_ = Conv2d<Scalar>(params_, rng, "decoder.stream.down", c1, c1, 3,
                                    -stream_resample_, 1);
    }
    for (int i = 2; i < 5; ++i) {
      tubs_.emplace_back(params_, rng, "decoder.tub" + std::to_string(i), cfg_.temporal_block,
                         sched[i].first, sched[i].second, s[i], i == 4, slope_);
    }
  }

  if (cfg_.use_mfu) {
    mfu_.emplace_back(params_, rng, "decoder.mfu.b0", sched[2].second, sched[3].second, s[3],
                      cfg_.n_rb, slope_);
    mfu_.emplace_back(params_, rng, "decoder.mfu.b1", sched[3].second, sched[4].second, s[4],
                      cfg_.n_rb, slope_);
  }
  const int c = sched[4].second;
  ll_head_ = Conv2d<Scalar>(params_, rng, "decoder.ll_head", c, 3, 3, 1, 1);
  if (cfg_.use_hfr) {
    for (const char* band : {"lh", "hl", "hh"}) {
      const std::string n = std::string("decoder.hfr.") + band;
      hfr_.push_back({Conv2d<Scalar>(params_, rng, n + ".a", c, c, 3, 1, 1),
                      Conv2d<Scalar>(params_, rng, n + ".b", c, 3, 3, 1, 1)});
    }
  } else {
    detail_head_ = Conv2d<Scalar>(params_, rng, "decoder.detail_head", c, 9, 3, 1, 1);
  }
}

template <typename Scalar>
void SnervModel<Scalar>::check_frame(const Tensor<Scalar>& frame) const {
  if (frame.shape != Shape{3, cfg_.height, cfg_.width}) {
    throw ConfigError("frame shape " + to_string(frame.shape) + " does not match configured " +
                      to_string(Shape{3, cfg_.height, cfg_.width}));
  }
}

template <typename Scalar>
Var<Scalar> SnervModel<Scalar>::encode(const Tensor<Scalar>& frame) const {
  check_frame(frame);
  return encoder_(Var<Scalar>::constant(dwt2_haar(frame).ll));
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> SnervModel<Scalar>::encode_temporal(
    const Tensor<Scalar>& prev, const Tensor<Scalar>& cur, const Tensor<Scalar>& next) const {
  if (!cfg_.temporal) throw UsageError("encode_temporal on a backbone model");
  if (!prev.same_shape(cur) || !next.same_shape(cur)) {
    throw InputError("encode_temporal: frames differ in shape");
  }
  check_frame(cur);
  const Tensor<Scalar> ll_p = dwt2_haar(prev).ll, ll_c = dwt2_haar(cur).ll,
                       ll_n = dwt2_haar(next).ll;
  auto lf = [&](const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    return tencoder_(Var<Scalar>::constant(dwt_temporal_pair(a, b).first));
  };
  return {lf(ll_p, ll_c), lf(ll_c, ll_n)};
}

template <typename Scalar>
Embedding<Scalar> SnervModel<Scalar>::embed(const Tensor<Scalar>& prev, const Tensor<Scalar>& cur,
                                            const Tensor<Scalar>& next) const {
  Embedding<Scalar> e;
  e.e_t = encode(cur);
  if (cfg_.temporal) std::tie(e.e_b, e.e_f) = encode_temporal(prev, cur, next);
  return e;
}

template <typename Scalar>
DecodeOutput<Scalar> SnervModel<Scalar>::decode(const Embedding<Scalar>& e) const {
  const Shape want{cfg_.embed_channels, cfg_.embed_h, cfg_.embed_w};
  if (!e.e_t.defined() || e.e_t.shape() != want) {
    throw ConfigError("embedding e_t must have shape " + to_string(want));
  }
  if (!cfg_.temporal) return decode_backbone(e.e_t);
  if (!e.temporal()) throw UsageError("temporal model decoded without temporal embeddings");
  const Shape tw{3, cfg_.temporal_h, cfg_.temporal_w};
  if (e.e_b.shape() != tw || e.e_f.shape() != tw) {
    throw ConfigError("temporal embeddings must have shape " + to_string(tw));
  }
  return decode_temporal(e);
}

template <typename Scalar>
DecodeOutput<Scalar> SnervModel<Scalar>::decode_backbone(const Var<Scalar>& e_t) const {
  std::vector<Var<Scalar>> u;
  Var<Scalar> x = e_t;
  for (const auto& ub : ubs_) {
    x = ub(x);
    u.push_back(x);
  }
  return tail(u[2], u[3], u[4]);
}

template <typename Scalar>
DecodeOutput<Scalar> SnervModel<Scalar>::decode_temporal(const Embedding<Scalar>& e) const {
  Var<Scalar> xt = ubs_[1](ubs_[0](e.e_t));
  auto stem = [&](const Var<Scalar>& z) {
    Var<Scalar> h = leaky_relu(stream_lift_(z), slope_);
    for (const auto& rb : stream_rbs_) h = rb(h);
    if (stream_resample_ > 0) h = stream_up_(h);
    if (stream_resample_ < 0) h = stream_down_(h);
    return h;
  };
  std::vector<Var<Scalar>> streams{stem(e.e_b), xt, stem(e.e_f)};
  streams = tubs_[0](streams);
  const Var<Scalar> u2 = streams[1];
  streams = tubs_[1](streams);
  const Var<Scalar> u3 = streams[1];
  const Var<Scalar> u4 = tubs_[2](streams)[0];
  return tail(u2, u3, u4);
}

template <typename Scalar>
DecodeOutput<Scalar> SnervModel<Scalar>::tail(const Var<Scalar>& u2, const Var<Scalar>& u3,
                                              const Var<Scalar>& u4) const {
  Var<Scalar> m = u4;
  if (cfg_.use_mfu) m = mfu_[1](mfu_[0](u2, u3), u4);
  DecodeOutput<Scalar> out;
  out.bands.ll = ll_head_(m);
  if (cfg_.use_hfr) {
    auto branch = [&](int i) { return hfr_[i][1](leaky_relu(hfr_[i][0](m), slope_)); };
    out.bands.lh = branch(0);
    out.bands.hl = branch(1);
    out.bands.hh = branch(2);
  } else {
    Var<Scalar> d = detail_head_(m);
    out.bands.lh = slice_channels(d, 0, 3);
    out.bands.hl = slice_channels(d, 3, 3);
    out.bands.hh = slice_channels(d, 6, 3);
  }
  out.frame = idwt2_haar(out.bands);
  return out;
}

template <typename Scalar>
ParamCount SnervModel<Scalar>::param_count() const {
  ParamCount pc;
  for (const auto& p : params_.all()) {
    if (p.name().rfind("decoder.", 0) == 0) {
      pc.decoder += p.size();
    } else {
      pc.encoder += p.size();
    }
  }
  pc.embedding_floats_per_frame = cfg_.embedding_floats();
  return pc;
}

template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>>> SnervModel<Scalar>::state() const {
  std::vector<std::pair<std::string, Tensor<Scalar>>> out;
  for (const auto& p : params_.all()) out.emplace_back(p.name(), p.value());
  return out;
}

template <typename Scalar>
void SnervModel<Scalar>::set_state(
    const std::vector<std::pair<std::string, Tensor<Scalar>>>& state) {
  if (state.size() != params_.size()) {
    throw ConfigError("state has " + std::to_string(state.size()) + " tensors, model has " +
                      std::to_string(params_.size()));
  }
  for (const auto& [name, value] : state) {
    if (!params_.contains(name)) throw ConfigError("unknown parameter '" + name + "'");
    Var<Scalar> p = params_.get(name);
    if (p.shape() != value.shape) {
      throw ConfigError("parameter '" + name + "' expects shape " + to_string(p.shape()) +
                        ", got " + to_string(value.shape));
    }
    p.mutable_value().data = value.data;
  }
}

ModelConfig matched_temporal_config(const ModelConfig& backbone, ModelConfig temporal,
                                    Index frames) {
  temporal.temporal = true;
  auto total = [frames](const ModelConfig& c) {
    const ParamCount pc = SnervModel<float>(c).param_count();
    return pc.decoder + frames * pc.embedding_floats_per_frame;
  };
  const Index budget = total(backbone);
  for (int c0 = backbone.c0; c0 >= 8; --c0) {
    temporal.c0 = c0;
    if (total(temporal) <= budget) return temporal;
  }
  throw ConfigError("c0: no temporal width fits the backbone budget of " +
                    std::to_string(budget));
}

template <typename Scalar>
std::uint64_t parameter_hash(const ParameterSet<Scalar>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params.all()) {
    mix(p.name().data(), p.name().size());
    mix(p.value().data.data(), sizeof(Scalar) * static_cast<std::size_t>(p.size()));
  }
  return h;
}

#define SNERV_INSTANTIATE(S)                                         \
  template struct Conv2d<S>;                                         \
  template struct ConvTranspose2d<S>;                                \
  template struct ResBlock<S>;                                       \
  template struct UpBlock<S>;                                        \
  template struct FusionBlock<S>;                                    \
  template struct ConvEncoder<S>;                                    \
  template struct TemporalUpBlock<S>;                                \
  template class SnervModel<S>;                                      \
  template std::uint64_t parameter_hash<S>(const ParameterSet<S>&);

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
SNERV_INSTANTIATE(long double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
