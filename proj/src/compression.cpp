// SPDX-License-Identifier: Apache-2.0
#include "snerv/compression.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "snerv/bytes.hpp"
#include "snerv/rng.hpp"

namespace snerv {

bool is_prunable(const std::string& name, const Shape& shape) {
  return name.rfind("decoder.", 0) == 0 && shape.size() == 4;
}

PruneResult prune_global(NamedTensors& tensors, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("prune fraction must lie in [0, 1), got " + std::to_string(fraction));
  }
  PruneResult result;
  // Candidate tensors in name order, so (name, index) ties resolve by position.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (is_prunable(tensors[i].first, tensors[i].second.shape)) {
      order.push_back(i);
      result.candidates += tensors[i].second.size();
    }
  }
  if (fraction == 0.0) return result;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return tensors[a].first < tensors[b].first; });

  struct Entry {
    float mag;
    std::uint32_t tensor;  // rank in name order
    std::uint32_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(result.candidates));
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& data = tensors[order[r]].second.data;
    for (Index k = 0; k < data.size(); ++k) {
      entries.push_back({std::abs(data[k]), static_cast<std::uint32_t>(r),
                         static_cast<std::uint32_t>(k)});
    }
  }
  result.zeroed = static_cast<Index>(std::floor(fraction * static_cast<double>(result.candidates)));
  auto less = [](const Entry& a, const Entry& b) {
    if (a.mag != b.mag) return a.mag < b.mag;
    if (a.tensor != b.tensor) return a.tensor < b.tensor;
    return a.index < b.index;
  };
  const auto cut = entries.begin() + result.zeroed;
  if (result.zeroed > 0) std::nth_element(entries.begin(), cut - 1, entries.end(), less);

  std::vector<std::vector<std::uint8_t>> masks(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    masks[r].assign(static_cast<std::size_t>(tensors[order[r]].second.size()), 1);
  }
  for (auto it = entries.begin(); it != cut; ++it) {
    masks[it->tensor][it->index] = 0;
    tensors[order[it->tensor]].second.data[it->index] = 0.0f;
  }
  // Report masks in the caller's tensor order.
  std::vector<std::size_t> rank_of(tensors.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) rank_of[order[r]] = r;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (is_prunable(tensors[i].first, tensors[i].second.shape)) {
      result.masks.emplace_back(tensors[i].first, std::move(masks[rank_of[i]]));
    }
  }
  return result;
}

QuantizedTensor quantize_tensor(const Eigen::Ref<const Vec<float>>& x, int bits) {
  if (bits < 2 || bits > 16) throw ConfigError("bit width must lie in [2, 16], got " +
                                               std::to_string(bits));
  if (!x.allFinite()) throw InputError("cannot quantize non-finite values");
  QuantizedTensor qt;
  qt.q.assign(static_cast<std::size_t>(x.size()), 0);
  if (x.size() == 0) {
    qt.bit_width = 0;
    return qt;
  }
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  if (lo == hi) {
    qt.bit_width = 0;
    qt.scale = static_cast<float>(lo);
    return qt;
  }
  const double levels = std::ldexp(1.0, bits) - 1.0;
  qt.bit_width = bits;
  qt.scale = static_cast<float>((hi - lo) / levels);
  const double scale = qt.scale;
  qt.zero_point = static_cast<std::int32_t>(std::lround(-lo / scale));
  for (Index i = 0; i < x.size(); ++i) {
    const double v = std::nearbyint(static_cast<double>(x[i]) / scale) + qt.zero_point;
    qt.q[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(std::clamp(v, 0.0, levels));
  }
  return qt;
}

Vec<double> dequantize(const QuantizedTensor& qt, Index count) {
  Vec<double> out(count);
  if (qt.bit_width == 0) {
    out.setConstant(qt.scale);
    return out;
  }
  if (static_cast<Index>(qt.q.size()) != count) {
    throw UsageError("dequantize: expected " + std::to_string(count) + " values");
  }
  for (Index i = 0; i < count; ++i) {
    out[i] = (static_cast<double>(qt.q[static_cast<std::size_t>(i)]) - qt.zero_point) *
             static_cast<double>(qt.scale);
  }
  return out;
}

namespace {

CompressedTensor encode_tensor(std::string name, const Tensor<float>& t, int bits,
                               const std::vector<std::uint8_t>* mask) {
  CompressedTensor ct;
  ct.name = std::move(name);
  ct.shape = t.shape;
  Vec<float> kept;
  if (mask) {
    ct.bitmap = *mask;
    const Index n = std::count(mask->begin(), mask->end(), std::uint8_t{1});
    kept.resize(n);
    Index j = 0;
    for (Index i = 0; i < t.size(); ++i) {
      if ((*mask)[static_cast<std::size_t>(i)]) kept[j++] = t.data[i];
    }
  } else {
    kept = t.data;
  }
  QuantizedTensor qt = quantize_tensor(kept, bits);
  ct.bit_width = qt.bit_width;
  ct.scale = qt.scale;
  ct.zero_point = qt.zero_point;
  ct.values = std::move(qt.q);
  return ct;
}

Tensor<float> decode_tensor(const CompressedTensor& ct) {
  QuantizedTensor qt{ct.values, ct.scale, ct.zero_point, ct.bit_width};
  const Vec<double> kept = dequantize(qt, static_cast<Index>(ct.values.size()));
  Tensor<float> t(ct.shape);
  if (ct.bitmap.empty()) {
    t.data = kept.cast<float>();
    return t;
  }
  Index j = 0;
  for (Index i = 0; i < t.size(); ++i) {
    if (ct.bitmap[static_cast<std::size_t>(i)]) t.data[i] = static_cast<float>(kept[j++]);
  }
  return t;
}

Tensor<float> stack_frames(const std::vector<Tensor<float>>& xs) {
  Shape shape = xs.front().shape;
  shape.insert(shape.begin(), static_cast<Index>(xs.size()));
  Tensor<float> out(shape);
  const Index per = xs.front().size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.data.segment(static_cast<Index>(i) * per, per) = xs[i].data;
  }
  return out;
}

std::vector<Tensor<float>> unstack_frames(const Tensor<float>& t) {
  const Shape one(t.shape.begin() + 1, t.shape.end());
  const Index per = numel(one);
  std::vector<Tensor<float>> out;
  for (Index i = 0; i < t.shape[0]; ++i) {
    out.emplace_back(one, Vec<float>(t.data.segment(i * per, per)));
  }
  return out;
}

class BitWriter {
 public:
  void put(std::uint32_t value, int bits) {
    for (int i = 0; i < bits; ++i) {
      if (used_ % 8 == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() = static_cast<char>(bytes_.back() | (1 << (used_ % 8)));
      ++used_;
    }
  }
  std::uint64_t bits() const { return used_; }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
  std::uint64_t used_ = 0;
};

class BitReader {
 public:
  BitReader(const std::string& bytes, std::uint64_t bits) : bytes_(bytes), limit_(bits) {}
  std::uint32_t get(int bits) {
    if (pos_ + static_cast<std::uint64_t>(bits) > limit_) {
      throw CorruptionError("compressed container: bitstream overrun");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < bits; ++i, ++pos_) {
      const auto byte = static_cast<unsigned char>(bytes_[pos_ / 8]);
      v |= static_cast<std::uint32_t>((byte >> (pos_ % 8)) & 1u) << i;
    }
    return v;
  }
  std::uint64_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  std::uint64_t limit_;
  std::uint64_t pos_ = 0;
};

std::string header_bytes(const CompressedModel& cm, std::uint64_t payload_bits) {
  ByteWriter w;
  w.bytes("SNVC");
  w.u16(kContainerVersion);
  w.str32(cm.cfg.to_text());
  w.u32(static_cast<std::uint32_t>(cm.frames));
  w.f64(cm.prune_fraction);
  w.u8(static_cast<std::uint8_t>(cm.bits_decoder));
  w.u8(static_cast<std::uint8_t>(cm.bits_embed));
  w.u64(static_cast<std::uint64_t>(cm.decoder_weights));
  w.u64(static_cast<std::uint64_t>(cm.decoder_biases));
  w.u64(static_cast<std::uint64_t>(cm.embedding_floats));
  w.u32(static_cast<std::uint32_t>(cm.tensors.size()));
  for (const auto& t : cm.tensors) {
    w.str16(t.name);
    w.u8(static_cast<std::uint8_t>(t.bit_width));
    w.u8(t.bitmap.empty() ? 0 : 1);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (Index d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32(t.scale);
    w.i32(t.zero_point);
  }
  w.u64(payload_bits);
  return w.buffer();
}

std::uint64_t total_payload_bits(const CompressedModel& cm) {
  std::uint64_t bits = 0;
  for (const auto& t : cm.tensors) bits += t.payload_bits();
  return bits;
}

}  // namespace

CompressedModel compress(const SnervModel<float>& model, const EmbeddingSet& embeddings,
                         const CompressOptions& options, PruneResult* prune_out) {
  if (embeddings.size() == 0) throw InputError("compress needs at least one frame embedding");
  CompressedModel cm;
  cm.cfg = model.config();
  cm.frames = static_cast<Index>(embeddings.size());
  cm.prune_fraction = options.prune_fraction;
  cm.bits_decoder = options.bits_decoder;
  cm.bits_embed = options.bits_embed;

  NamedTensors decoder;
  for (auto& [name, t] : model.state()) {
    if (name.rfind("decoder.", 0) == 0) decoder.emplace_back(name, std::move(t));
  }
  PruneResult pr = prune_global(decoder, options.prune_fraction);
  cm.decoder_weights = pr.candidates;
  std::map<std::string, const std::vector<std::uint8_t>*> masks;
  for (const auto& [name, m] : pr.masks) masks[name] = &m;

  for (const auto& [name, t] : decoder) {
    const bool weight = is_prunable(name, t.shape);
    if (!weight) cm.decoder_biases += t.size();
    const int bits = weight ? options.bits_decoder : std::max(options.bits_decoder, 8);
    auto it = masks.find(name);
    cm.tensors.push_back(encode_tensor(name, t, bits, it == masks.end() ? nullptr : it->second));
  }
  auto add_embedding = [&](const std::string& name, const std::vector<Tensor<float>>& xs) {
    if (xs.empty()) return;
    Tensor<float> stacked = stack_frames(xs);
    cm.embedding_floats += stacked.size();
    cm.tensors.push_back(encode_tensor(name, stacked, options.bits_embed, nullptr));
  };
  add_embedding("embed.t", embeddings.e_t);
  add_embedding("embed.b", embeddings.e_b);
  add_embedding("embed.f", embeddings.e_f);
  if (prune_out) *prune_out = std::move(pr);
  return cm;
}

Decompressed decompress(const CompressedModel& cm) {
  Decompressed out;
  out.model = std::make_unique<SnervModel<float>>(cm.cfg);
  auto& params = out.model->params();
  Index restored = 0, decoder_total = 0;
  for (const auto& p : params.all()) {
    if (p.name().rfind("decoder.", 0) == 0) ++decoder_total;
  }
  for (const auto& ct : cm.tensors) {
    Tensor<float> t = decode_tensor(ct);
    if (ct.name == "embed.t") {
      out.embeddings.e_t = unstack_frames(t);
    } else if (ct.name == "embed.b") {
      out.embeddings.e_b = unstack_frames(t);
    } else if (ct.name == "embed.f") {
      out.embeddings.e_f = unstack_frames(t);
    } else {
      if (!params.contains(ct.name) || params.get(ct.name).shape() != ct.shape) {
        throw CorruptionError("compressed tensor '" + ct.name + "' does not match the config");
      }
      Var<float> p = params.get(ct.name);
      p.mutable_value().data = t.data;
      ++restored;
    }
  }
  if (restored != decoder_total) {
    throw CorruptionError("compressed model restores " + std::to_string(restored) + " of " +
                          std::to_string(decoder_total) + " decoder tensors");
  }
  return out;
}

std::string serialize_compressed(const CompressedModel& cm) {
  BitWriter bits;
  for (const auto& t : cm.tensors) {
    for (std::uint8_t b : t.bitmap) bits.put(b, 1);
    if (t.bit_width > 0) {
      for (std::uint32_t v : t.values) bits.put(v, t.bit_width);
    }
  }
  return header_bytes(cm, bits.bits()) + bits.bytes();
}

CompressedModel deserialize_compressed(const std::string& bytes) {
  ByteReader in(bytes, "compressed container");
  if (in.bytes(4) != "SNVC") throw CorruptionError("compressed container: bad magic");
  const std::uint16_t version = in.u16();
  if (version != kContainerVersion) {
    throw VersionError("compressed container version " + std::to_string(version) +
                       " is not supported");
  }
  CompressedModel cm;
  cm.cfg = ModelConfig::from_text(in.str32());
  cm.frames = in.u32();
  cm.prune_fraction = in.f64();
  cm.bits_decoder = in.u8();
  cm.bits_embed = in.u8();
  cm.decoder_weights = static_cast<Index>(in.u64());
  cm.decoder_biases = static_cast<Index>(in.u64());
  cm.embedding_floats = static_cast<Index>(in.u64());
  const std::uint32_t count = in.u32();
  std::vector<bool> has_bitmap;
  for (std::uint32_t i = 0; i < count; ++i) {
    CompressedTensor t;
    t.name = in.str16();
    t.bit_width = in.u8();
    has_bitmap.push_back(in.u8() != 0);
    t.shape.resize(in.u8());
    for (auto& d : t.shape) d = in.u32();
    t.scale = in.f32();
    t.zero_point = in.i32();
    cm.tensors.push_back(std::move(t));
  }
  const std::uint64_t payload_bits = in.u64();
  const std::string stream = in.bytes(in.remaining());
  if (stream.size() != (payload_bits + 7) / 8) {
    throw CorruptionError("compressed container: bitstream length does not match its header");
  }
  BitReader bits(stream, payload_bits);
  for (std::size_t i = 0; i < cm.tensors.size(); ++i) {
    auto& t = cm.tensors[i];
    const Index n = numel(t.shape);
    std::size_t kept = static_cast<std::size_t>(n);
    if (has_bitmap[i]) {
      t.bitmap.resize(static_cast<std::size_t>(n));
      for (auto& b : t.bitmap) b = static_cast<std::uint8_t>(bits.get(1));
      kept = static_cast<std::size_t>(std::count(t.bitmap.begin(), t.bitmap.end(), 1));
    }
    t.values.assign(kept, 0);
    if (t.bit_width > 0) {
      for (auto& v : t.values) v = bits.get(t.bit_width);
    }
  }
  if (bits.position() != payload_bits) {
    throw CorruptionError("compressed container: unread bitstream bits");
  }
  return cm;
}

BitAccount account(const CompressedModel& cm) {
  BitAccount a;
  a.payload_bits = total_payload_bits(cm);
  a.header_bytes = header_bytes(cm, a.payload_bits).size();
  for (const auto& t : cm.tensors) {
    const std::uint64_t value_bits =
        t.values.size() * static_cast<std::uint64_t>(t.bit_width);
    a.bitmap_bits += t.bitmap.size();
    if (t.name.rfind("embed.", 0) == 0) {
      a.embedding_bits += value_bits;
    } else {
      a.decoder_value_bits += value_bits;
    }
  }
  return a;
}

double bpp(const CompressedModel& cm, Index height, Index width, Index frames) {
  if (height <= 0 || width <= 0 || frames <= 0) throw InputError("bpp needs positive dims");
  return static_cast<double>(account(cm).total_bits()) /
         (static_cast<double>(height) * static_cast<double>(width) * static_cast<double>(frames));
}

double entropy_bits(const CompressedModel& cm) {
  double total = 0;
  for (const auto& t : cm.tensors) {
    if (t.bit_width == 0 || t.values.empty()) continue;
    std::map<std::uint32_t, std::size_t> hist;
    for (std::uint32_t v : t.values) ++hist[v];
    const double n = static_cast<double>(t.values.size());
    for (const auto& [v, c] : hist) {
      const double p = static_cast<double>(c) / n;
      total -= static_cast<double>(c) * std::log2(p);
    }
    total += static_cast<double>(t.bitmap.size());
  }
  return total;
}

RoundtripReport roundtrip(const SnervModel<float>& model, const Frames& clip, Task task,
                          const CompressOptions& options, const std::optional<MaskSpec>& mask,
                          std::string* container) {
  RoundtripReport r;
  const EmbeddingSet emb = compute_embeddings(model, clip, task, mask);
  const CompressedModel cm = compress(model, emb, options, &r.prune);
  const std::string bytes = serialize_compressed(cm);
  const CompressedModel reloaded = deserialize_compressed(bytes);
  if (!(reloaded == cm) || serialize_compressed(reloaded) != bytes) {
    throw IntegrityError("compressed model did not reload to an identical payload");
  }
  r.bits = account(cm);
  r.file_bytes = bytes.size();
  if (r.file_bytes != r.bits.file_bytes()) {
    throw IntegrityError("container is " + std::to_string(r.file_bytes) +
                         " bytes but the accounting gives " +
                         std::to_string(r.bits.file_bytes()));
  }
  const Index frames = static_cast<Index>(clip.size());
  r.bpp = bpp(cm, clip.at(0).height(), clip.at(0).width(), frames);
  r.entropy_bpp = (entropy_bits(cm) + 8.0 * static_cast<double>(r.bits.header_bytes)) /
                  static_cast<double>(clip[0].height() * clip[0].width() * frames);

  const auto indices = prepare_task(clip, task, mask).test;
  const MetricsTable before = score(reconstruct(model, emb), clip, indices);
  const Decompressed dec = decompress(reloaded);
  const MetricsTable after = score(reconstruct(*dec.model, dec.embeddings), clip, indices);
  r.original = before.frames;
  r.compressed = after.frames;
  r.mean_psnr_original = before.mean_psnr;
  r.mean_psnr_compressed = after.mean_psnr;
  r.delta_psnr = before.mean_psnr - after.mean_psnr;
  if (container) *container = bytes;
  return r;
}

double expected_bpp(const ModelConfig& cfg, Index frames, const CompressOptions& options) {
  SnervModel<float> model(cfg);
  Rng rng(cfg.seed + 1);
  EmbeddingSet emb;
  auto random = [&rng](Shape s) {
    Tensor<float> t(std::move(s));
    for (Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(rng.uniform(-1, 1));
    return t;
  };
  for (Index i = 0; i < frames; ++i) {
    emb.e_t.push_back(random({cfg.embed_channels, cfg.embed_h, cfg.embed_w}));
    if (cfg.temporal) {
      emb.e_b.push_back(random({3, cfg.temporal_h, cfg.temporal_w}));
      emb.e_f.push_back(random({3, cfg.temporal_h, cfg.temporal_w}));
    }
  }
  return bpp(compress(model, emb, options), cfg.height, cfg.width, frames);
}

}  // namespace snerv
