// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "snerv/tensor.hpp"

namespace snerv {

/// How the temporal decoder's last three stages are realised.
enum class TemporalBlock {
  kTub2d,  ///< time folded into channels, 2D convolutions
  kTub3d,  ///< 3x3x3 convolutions over the (backward, target, forward) axis
  kNerv,   ///< plain NeRV blocks on the stacked streams (ablation)
};

std::string to_string(TemporalBlock block);
TemporalBlock parse_temporal_block(const std::string& text);

/// Complete architectural description; a model is a deterministic function
/// of this struct (weights drawn from `seed`).
struct ModelConfig {
  Index height = 64;
  Index width = 128;
  /// Decoder up-sampling factor of each of the five UBs; the encoder uses the
  /// same factors in reverse as down-sampling strides.
  std::vector<int> strides{2, 2, 2, 2, 1};
  int c0 = 32;
  double reduction = 1.2;
  int n_rb = 6;
  int embed_channels = 16;
  Index embed_h = 2;
  Index embed_w = 4;
  int encoder_width = 32;

  bool temporal = false;
  Index temporal_h = 8;
  Index temporal_w = 16;
  std::vector<int> temporal_encoder_strides{2, 2};
  int temporal_encoder_width = 64;
  TemporalBlock temporal_block = TemporalBlock::kTub2d;

  bool use_mfu = true;
  bool use_hfr = true;
  double leaky_slope = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Line-oriented `key=value` text, stable field order.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  /// Applies known keys from a flat map; unknown keys raise ConfigError.
  static ModelConfig from_map(const std::map<std::string, std::string>& kv,
                              ModelConfig base);
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  Index ll_height() const { return height / 2; }
  Index ll_width() const { return width / 2; }
  Index embedding_floats() const {
    return static_cast<Index>(embed_channels) * embed_h * embed_w +
           (temporal ? 2 * 3 * temporal_h * temporal_w : 0);
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Desk-scale defaults: 64x128 video, C0 = 32, strides (2,2,2,2,1),
/// 16x2x4 embedding.
ModelConfig desk_config();

/// Paper-scale backbone for 640x1280 video (strides 5,4,2,2,2, C0=111, N_RB=6).
ModelConfig paper_backbone_640x1280();

/// Per-UB (in, out) channel counts: out_i = max(floor(c0 / r^i), 8) and the
/// first UB reads the embedding channels.
std::vector<std::pair<int, int>> channel_schedule(const ModelConfig& cfg);

}  // namespace snerv
