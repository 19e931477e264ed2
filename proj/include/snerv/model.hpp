// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snerv/autodiff.hpp"
#include "snerv/config.hpp"
#include "snerv/rng.hpp"
#include "snerv/wavelet.hpp"

namespace snerv {

template <typename Scalar>
struct Conv2d {
  Var<Scalar> weight;  // [Cout, Cin, k, k]
  Var<Scalar> bias;    // [Cout]
  int stride = 1;
  int pad = 1;

  Conv2d() = default;
  /// `fan_in_taps` widens the init fan-in for kernels that are one tap of a
  /// larger (3D) filter.
  Conv2d(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int cin, int cout,
         int kernel, int stride, int pad, bool with_bias = true, int fan_in_taps = 1);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
  int out_channels() const { return static_cast<int>(weight.shape()[0]); }
};

template <typename Scalar>
struct ConvTranspose2d {
  Var<Scalar> weight;  // [Cin, Cout, k, k]
  Var<Scalar> bias;
  int stride = 1;
  int pad = 1;

  ConvTranspose2d() = default;
  /// Kernel stride + 2 with padding 1, so spatial size scales exactly by stride.
  ConvTranspose2d(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int cin,
                  int cout, int stride, bool with_bias = true, int fan_in_taps = 1);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

/// conv3 -> leaky -> conv3, plus identity.
template <typename Scalar>
struct ResBlock {
  Conv2d<Scalar> a, b;
  Scalar slope{};

  ResBlock() = default;
  ResBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int channels,
           Scalar slope);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

/// NeRV up-sampling block: conv3 to cout*s^2, pixel shuffle, leaky.
template <typename Scalar>
struct UpBlock {
  Conv2d<Scalar> conv;
  int factor = 1;
  Scalar slope{};

  UpBlock() = default;
  UpBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int cin, int cout,
          int factor, Scalar slope);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

/// One MF block: m' = RBs(fuse(CT(m) o u)).
template <typename Scalar>
struct FusionBlock {
  ConvTranspose2d<Scalar> up;
  Conv2d<Scalar> fuse;
  std::vector<ResBlock<Scalar>> rbs;

  FusionBlock() = default;
  FusionBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name, int m_channels,
              int u_channels, int stride, int n_rb, Scalar slope);
  Var<Scalar> operator()(const Var<Scalar>& m, const Var<Scalar>& u) const;
};

/// Downsampling stack: strided conv3 + leaky per stride, then 1x1 projection.
template <typename Scalar>
struct ConvEncoder {
  std::vector<Conv2d<Scalar>> stages;
  Conv2d<Scalar> proj;
  Scalar slope{};

  ConvEncoder() = default;
  ConvEncoder(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
              const std::vector<int>& strides, int width, int out_channels, Scalar slope);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

/// Three-stream temporal up-sampling stage.
template <typename Scalar>
struct TemporalUpBlock {
  TemporalBlock kind = TemporalBlock::kTub2d;
  bool last = false;
  int cout = 0;
  Scalar slope{};
  // kTub2d: up/c1/c2 act on the channel-stacked streams.
  // kTub3d: one weight per time tap, indexed [tap].
  // kNerv: a single UpBlock on the stacked streams.
  std::vector<ConvTranspose2d<Scalar>> up;
  std::vector<Conv2d<Scalar>> c1, c2;
  UpBlock<Scalar> nerv;

  TemporalUpBlock() = default;
  TemporalUpBlock(ParameterSet<Scalar>& ps, Rng& rng, const std::string& name,
                  TemporalBlock kind, int cin, int cout, int stride, bool last, Scalar slope);
  /// Streams ordered (backward, target, forward). Returns three streams, or
  /// one merged stream when `last`.
  std::vector<Var<Scalar>> operator()(const std::vector<Var<Scalar>>& streams) const;
};

/// e_t plus the optional backward/forward temporal embeddings.
template <typename Scalar>
struct Embedding {
  Var<Scalar> e_t;   // [16, h_e, w_e]
  Var<Scalar> e_b;   // [3, h_t, w_t]
  Var<Scalar> e_f;
  bool temporal() const { return e_b.defined() && e_f.defined(); }
};

template <typename Scalar>
struct DecodeOutput {
  SubbandVars<Scalar> bands;
  Var<Scalar> frame;  // idwt2_haar(bands)
};

struct ParamCount {
  Index encoder = 0;
  Index decoder = 0;
  Index embedding_floats_per_frame = 0;
};

/// Encoder (frame -> embeddings) and decoder (embeddings -> sub-bands -> frame).
template <typename Scalar>
class SnervModel {
 public:
  explicit SnervModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }

  /// DWT, keep LL, downsample to e_t. Throws ConfigError on resolution mismatch.
  Var<Scalar> encode(const Tensor<Scalar>& frame) const;

  /// (e_dt_b, e_dt_f) from the (prev, cur) and (cur, next) LL pairs.
  std::pair<Var<Scalar>, Var<Scalar>> encode_temporal(const Tensor<Scalar>& prev,
                                                      const Tensor<Scalar>& cur,
                                                      const Tensor<Scalar>& next) const;

  /// Full embedding; prev/next are only read by temporal models.
  Embedding<Scalar> embed(const Tensor<Scalar>& prev, const Tensor<Scalar>& cur,
                          const Tensor<Scalar>& next) const;

  DecodeOutput<Scalar> decode(const Embedding<Scalar>& e) const;

  ParamCount param_count() const;

  /// Named copies of every parameter, in registration order.
  std::vector<std::pair<std::string, Tensor<Scalar>>> state() const;
  /// Overwrites parameters by name. Every parameter must be present with its
  /// registered shape; unknown names raise ConfigError.
  void set_state(const std::vector<std::pair<std::string, Tensor<Scalar>>>& state);

 private:
  DecodeOutput<Scalar> decode_backbone(const Var<Scalar>& e_t) const;
  DecodeOutput<Scalar> decode_temporal(const Embedding<Scalar>& e) const;
  DecodeOutput<Scalar> tail(const Var<Scalar>& u2, const Var<Scalar>& u3,
                            const Var<Scalar>& u4) const;
  void check_frame(const Tensor<Scalar>& frame) const;

  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
  Scalar slope_;

  ConvEncoder<Scalar> encoder_;
  ConvEncoder<Scalar> tencoder_;

  std::vector<UpBlock<Scalar>> ubs_;
  std::vector<FusionBlock<Scalar>> mfu_;
  Conv2d<Scalar> ll_head_;
  std::vector<std::vector<Conv2d<Scalar>>> hfr_;  // [band][a, b]
  Conv2d<Scalar> detail_head_;

  // Temporal stream stem shared by both directions.
  Conv2d<Scalar> stream_lift_;
  std::vector<ResBlock<Scalar>> stream_rbs_;
  ConvTranspose2d<Scalar> stream_up_;
  Conv2d<Scalar> stream_down_;
  int stream_resample_ = 0;  // >0 up factor, <0 down factor, 0 none
  std::vector<TemporalUpBlock<Scalar>> tubs_;
};

/// Returns a copy of the temporal config `temporal` whose c0 is the largest
/// value keeping decoder parameters plus `frames` embeddings within the
/// backbone `backbone`'s total.
ModelConfig matched_temporal_config(const ModelConfig& backbone, ModelConfig temporal,
                                    Index frames);

/// Flat parameter digest (FNV-1a over names and raw bytes).
template <typename Scalar>
std::uint64_t parameter_hash(const ParameterSet<Scalar>& params);

}  // namespace snerv
