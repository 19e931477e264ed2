// SPDX-License-Identifier: Apache-2.0
#include "snerv/config.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "snerv/text.hpp"

namespace snerv {

std::string to_string(TemporalBlock block) {
  switch (block) {
    case TemporalBlock::kTub2d: return "tub2d";
    case TemporalBlock::kTub3d: return "tub3d";
    case TemporalBlock::kNerv: return "nerv";
  }
  return "tub2d";
}

TemporalBlock parse_temporal_block(const std::string& text) {
  if (text == "tub2d" || text == "tub") return TemporalBlock::kTub2d;
  if (text == "tub3d") return TemporalBlock::kTub3d;
  if (text == "nerv") return TemporalBlock::kNerv;
  throw ConfigError("temporal_block: unknown value '" + text + "' (tub2d|tub3d|nerv)");
}

namespace {

int product(const std::vector<int>& v) {
  return std::accumulate(v.begin(), v.end(), 1, std::multiplies<>());
}

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("invalid config field '" + field + "': " + why);
}

}  // namespace

void ModelConfig::validate() const {
  require(height > 0 && width > 0, "resolution", "must be positive");
  require(height % 2 == 0 && width % 2 == 0, "resolution", "height and width must be even");
  require(strides.size() == 5, "strides", "exactly five decoder strides are required");
  for (int s : strides) require(s >= 1, "strides", "every stride must be >= 1");
  require(c0 >= 8, "c0", "must be >= 8");
  require(reduction > 0.0, "r", "reduction rate must be positive");
  require(n_rb >= 1, "n_rb", "must be >= 1");
  require(embed_channels >= 1, "embed", "channel count must be positive");
  require(encoder_width >= 1, "encoder_width", "must be positive");
  require(leaky_slope >= 0.0, "leaky_slope", "must be non-negative");
  const int p = product(strides);
  require(ll_height() % p == 0 && ll_width() % p == 0 && ll_height() / p == embed_h &&
              ll_width() / p == embed_w,
          "embed",
          "LL plane " + std::to_string(ll_height()) + "x" + std::to_string(ll_width()) +
              " divided by stride product " + std::to_string(p) + " must equal " +
              std::to_string(embed_h) + "x" + std::to_string(embed_w));
  if (!temporal) return;
  require(!temporal_encoder_strides.empty(), "temporal_strides", "must be non-empty");
  for (int s : temporal_encoder_strides) require(s >= 1, "temporal_strides", "must be >= 1");
  require(temporal_encoder_width >= 1, "temporal_encoder_width", "must be positive");
  const int tp = product(temporal_encoder_strides);
  require(ll_height() % tp == 0 && ll_width() % tp == 0 && ll_height() / tp == temporal_h &&
              ll_width() / tp == temporal_w,
          "temporal_embed",
          "LL plane divided by temporal stride product " + std::to_string(tp) + " must equal " +
              std::to_string(temporal_h) + "x" + std::to_string(temporal_w));
  // Temporal streams join the target stream after the first two UBs.
  const Index jh = embed_h * strides[0] * strides[1];
  const Index jw = embed_w * strides[0] * strides[1];
  const bool up = jh % temporal_h == 0 && jw % temporal_w == 0 &&
                  jh / temporal_h == jw / temporal_w;
  const bool down = temporal_h % jh == 0 && temporal_w % jw == 0 &&
                    temporal_h / jh == temporal_w / jw;
  require(up || down, "temporal_embed",
          "temporal embedding " + std::to_string(temporal_h) + "x" +
              std::to_string(temporal_w) + " must be an integer rescale of the " +
              std::to_string(jh) + "x" + std::to_string(jw) + " stage-2 grid");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "resolution=" << height << 'x' << width << '\n'
     << "strides=" << join_ints(strides) << '\n'
     << "c0=" << c0 << '\n'
     << "r=" << reduction << '\n'
     << "n_rb=" << n_rb << '\n'
     << "embed=" << embed_channels << 'x' << embed_h << 'x' << embed_w << '\n'
     << "encoder_width=" << encoder_width << '\n'
     << "temporal=" << (temporal ? "true" : "false") << '\n'
     << "temporal_embed=3x" << temporal_h << 'x' << temporal_w << '\n'
     << "temporal_strides=" << join_ints(temporal_encoder_strides) << '\n'
     << "temporal_encoder_width=" << temporal_encoder_width << '\n'
     << "temporal_block=" << to_string(temporal_block) << '\n'
     << "mfu=" << (use_mfu ? "true" : "false") << '\n'
     << "hfr=" << (use_hfr ? "true" : "false") << '\n'
     << "leaky_slope=" << leaky_slope << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv, ModelConfig c) {
  for (const auto& [key, value] : kv) {
    if (key == "resolution") {
      auto dims = parse_dims(value, key);
      require(dims.size() == 2, key, "expected HxW");
      c.height = dims[0];
      c.width = dims[1];
    } else if (key == "strides") {
      c.strides = parse_int_list(value, key);
    } else if (key == "c0") {
      c.c0 = parse_int(value, key);
    } else if (key == "r") {
      c.reduction = parse_double(value, key);
    } else if (key == "n_rb") {
      c.n_rb = parse_int(value, key);
    } else if (key == "embed") {
      auto dims = parse_dims(value, key);
      require(dims.size() == 3, key, "expected CxHxW");
      c.embed_channels = static_cast<int>(dims[0]);
      c.embed_h = dims[1];
      c.embed_w = dims[2];
    } else if (key == "encoder_width") {
      c.encoder_width = parse_int(value, key);
    } else if (key == "temporal") {
      c.temporal = parse_bool(value, key);
    } else if (key == "temporal_embed") {
      auto dims = parse_dims(value, key);
      require(dims.size() == 3 && dims[0] == 3, key, "expected 3xHxW");
      c.temporal_h = dims[1];
      c.temporal_w = dims[2];
    } else if (key == "temporal_strides") {
      c.temporal_encoder_strides = parse_int_list(value, key);
    } else if (key == "temporal_encoder_width") {
      c.temporal_encoder_width = parse_int(value, key);
    } else if (key == "temporal_block") {
      c.temporal_block = parse_temporal_block(value);
    } else if (key == "mfu") {
      c.use_mfu = parse_bool(value, key);
    } else if (key == "hfr") {
      c.use_hfr = parse_bool(value, key);
    } else if (key == "leaky_slope") {
      c.leaky_slope = parse_double(value, key);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_int64(value, key));
    } else {
      throw ConfigError("unknown model config field '" + key + "'");
    }
  }
  return c;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  return from_map(kv, ModelConfig{});
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  return from_map(parse_key_values(text));
}

ModelConfig desk_config() { return ModelConfig{}; }

ModelConfig paper_backbone_640x1280() {
  ModelConfig c;
  c.height = 640;
  c.width = 1280;
  c.strides = {5, 4, 2, 2, 2};
  c.c0 = 111;
  c.n_rb = 6;
  c.embed_h = 2;
  c.embed_w = 4;
  c.encoder_width = 64;
  return c;
}

std::vector<std::pair<int, int>> channel_schedule(const ModelConfig& cfg) {
  std::vector<std::pair<int, int>> out;
  int in = cfg.embed_channels;
  for (int i = 0; i < 5; ++i) {
    // Small epsilon keeps exact quotients (e.g. 12 / 1.2) from flooring down.
    const double width = static_cast<double>(cfg.c0) / std::pow(cfg.reduction, i) + 1e-9;
    const int ch = std::max(static_cast<int>(std::floor(width)), 8);
    out.emplace_back(in, ch);
    in = ch;
  }
  return out;
}

}  // namespace snerv
