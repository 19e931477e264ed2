// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snerv/model.hpp"
#include "snerv/trainer.hpp"

namespace snerv {

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

/// Retained-entry masks from pruning: one byte per element, 1 = kept.
struct PruneResult {
  Index candidates = 0;  // N, decoder weight elements considered
  Index zeroed = 0;      // floor(fraction * N)
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> masks;
};

/// True for tensors that take part in pruning: rank-4 "decoder." weights.
bool is_prunable(const std::string& name, const Shape& shape);

/// Zeroes the floor(fraction * N) smallest-magnitude prunable weights,
/// ranked globally with ties broken by (name, flat index). Non-prunable
/// tensors are untouched. fraction == 0 leaves everything as is and returns
/// no masks.
PruneResult prune_global(NamedTensors& tensors, double fraction);

struct QuantizedTensor {
  std::vector<std::uint32_t> q;
  float scale = 0;           // for constant input: the constant itself
  std::int32_t zero_point = 0;
  int bit_width = 0;         // 0 marks the constant (degenerate) path
};

/// Affine quantization: scale = (max - min) / (2^bits - 1),
/// zero_point = round(-min / scale), q = clamp(round(x / scale) + zp).
/// bits must lie in [2, 16].
QuantizedTensor quantize_tensor(const Eigen::Ref<const Vec<float>>& x, int bits);
Vec<double> dequantize(const QuantizedTensor& qt, Index count);

struct CompressOptions {
  double prune_fraction = 0.10;
  int bits_decoder = 8;
  int bits_embed = 6;
};

struct CompressedTensor {
  std::string name;
  Shape shape;
  int bit_width = 0;
  float scale = 0;
  std::int32_t zero_point = 0;
  std::vector<std::uint8_t> bitmap;  // empty when not pruned
  std::vector<std::uint32_t> values; // retained entries, in flat order

  std::uint64_t payload_bits() const {
    return bitmap.size() + values.size() * static_cast<std::uint64_t>(bit_width);
  }
  bool operator==(const CompressedTensor&) const = default;
};

struct CompressedModel {
  ModelConfig cfg;
  Index frames = 0;
  double prune_fraction = 0;
  int bits_decoder = 8;
  int bits_embed = 6;
  Index decoder_weights = 0;   // prunable elements before pruning
  Index decoder_biases = 0;
  Index embedding_floats = 0;
  std::vector<CompressedTensor> tensors;  // decoder tensors, then embed.t/.b/.f

  bool operator==(const CompressedModel&) const = default;
};

/// Prunes the decoder, then quantizes decoder weights at bits_decoder,
/// biases at max(bits_decoder, 8) and embeddings at bits_embed. The encoder
/// is not part of the compressed representation.
CompressedModel compress(const SnervModel<float>& model, const EmbeddingSet& embeddings,
                         const CompressOptions& options = {}, PruneResult* prune = nullptr);

/// Rebuilt decoder (encoder left at its initial values) and embeddings.
struct Decompressed {
  std::unique_ptr<SnervModel<float>> model;
  EmbeddingSet embeddings;
};
Decompressed decompress(const CompressedModel& cm);

/// Container: "SNVC", u16 version, metadata records, then one LSB-first
/// bitstream holding each record's bitmap followed by its packed values.
inline constexpr std::uint16_t kContainerVersion = 1;

std::string serialize_compressed(const CompressedModel& cm);
CompressedModel deserialize_compressed(const std::string& bytes);

struct BitAccount {
  std::uint64_t header_bytes = 0;
  std::uint64_t payload_bits = 0;
  std::uint64_t decoder_value_bits = 0;
  std::uint64_t bitmap_bits = 0;
  std::uint64_t embedding_bits = 0;
  std::uint64_t total_bits() const { return 8 * header_bytes + payload_bits; }
  std::uint64_t file_bytes() const { return header_bytes + (payload_bits + 7) / 8; }
};

BitAccount account(const CompressedModel& cm);

/// Accounted bits over height * width * frames.
double bpp(const CompressedModel& cm, Index height, Index width, Index frames);

/// Shannon estimate of the quantized symbols, in bits (informational).
double entropy_bits(const CompressedModel& cm);

struct RoundtripReport {
  std::vector<FrameMetric> original;
  std::vector<FrameMetric> compressed;
  double mean_psnr_original = 0;
  double mean_psnr_compressed = 0;
  double delta_psnr = 0;  // original - compressed
  BitAccount bits;
  std::uint64_t file_bytes = 0;
  double bpp = 0;
  double entropy_bpp = 0;
  PruneResult prune;
};

/// compress -> serialize -> reload (IntegrityError unless identical) ->
/// decode, scored against `clip` on the task's evaluation frames.
RoundtripReport roundtrip(const SnervModel<float>& model, const Frames& clip, Task task,
                          const CompressOptions& options = {},
                          const std::optional<MaskSpec>& mask = std::nullopt,
                          std::string* container = nullptr);

/// bpp of a freshly initialised model for a clip of the given size.
double expected_bpp(const ModelConfig& cfg, Index frames, const CompressOptions& options = {});

}  // namespace snerv
