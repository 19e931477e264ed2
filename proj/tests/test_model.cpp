// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"
#include "snerv/model.hpp"
#include "snerv/objectives.hpp"
#include "snerv/ops.hpp"

using namespace snerv;

namespace {

ModelConfig small_config() {
  ModelConfig c = desk_config();
  c.height = 32;
  c.width = 64;
  c.embed_h = 1;
  c.embed_w = 2;
  c.c0 = 16;
  c.n_rb = 1;
  return c;
}

template <typename S>
Tensor<S> frame(const ModelConfig& c, std::uint64_t seed) {
  return oracle::random_tensor<S>({3, c.height, c.width}, seed, 0, 1);
}

template <typename S>
void zero_prefix(SnervModel<S>& m, const std::string& prefix) {
  auto st = m.state();
  for (auto& [name, t] : st) {
    if (name.rfind(prefix, 0) == 0) t.data.setZero();
  }
  m.set_state(st);
}

}  // namespace

TEST_CASE("channel schedule") {
  ModelConfig c = paper_backbone_640x1280();
  std::vector<int> outs;
  for (auto [cin, cout] : channel_schedule(c)) outs.push_back(cout);
  CHECK(outs == std::vector<int>{111, 92, 77, 64, 53});
  CHECK(channel_schedule(c)[0].first == 16);
  CHECK(channel_schedule(c)[1].first == 111);
  c.reduction = 1.0;
  for (auto [cin, cout] : channel_schedule(c)) CHECK(cout == 111);
  c.c0 = 8;
  c.reduction = 1.2;
  for (auto [cin, cout] : channel_schedule(c)) CHECK(cout == 8);
}

TEST_CASE("config validation names the field") {
  ModelConfig c = desk_config();
  c.strides = {2, 2, 2};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("strides"), ConfigError);
  c = desk_config();
  c.embed_w = 5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("embed"), ConfigError);
  c = desk_config();
  c.height = 63;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("resolution"), ConfigError);
  CHECK(ModelConfig::from_text(desk_config().to_text()) == desk_config());
}

TEST_CASE("decoded frame shape across configurations") {
  struct Case {
    Index h, w;
    std::vector<int> strides;
    Index eh, ew;
  };
  const std::vector<Case> cases{{64, 128, {2, 2, 2, 2, 1}, 2, 4},
                                {48, 96, {3, 2, 2, 2, 1}, 1, 2},
                                {40, 80, {5, 2, 1, 1, 1}, 2, 4},
                                {32, 32, {2, 2, 2, 1, 1}, 2, 2}};
  for (const auto& k : cases) {
    ModelConfig c = small_config();
    c.height = k.h;
    c.width = k.w;
    c.strides = k.strides;
    c.embed_h = k.eh;
    c.embed_w = k.ew;
    for (bool mfu : {true, false}) {
      for (bool hfr : {true, false}) {
        c.use_mfu = mfu;
        c.use_hfr = hfr;
        SnervModel<float> m(c);
        auto e = m.embed(Tensor<float>(), frame<float>(c, 1), Tensor<float>());
        CHECK(e.e_t.shape() == Shape{16, k.eh, k.ew});
        auto out = m.decode(e);
        CHECK(out.frame.shape() == Shape{3, k.h, k.w});
        const Tensor<float> again = idwt2_haar(out.bands.values());
        CHECK(std::memcmp(again.data.data(), out.frame.value().data.data(),
                          sizeof(float) * static_cast<std::size_t>(again.size())) == 0);
      }
    }
  }
}

TEST_CASE("embedding behaviour") {
  const ModelConfig c = small_config();
  SnervModel<double> m(c);
  const auto a = frame<double>(c, 2), b = frame<double>(c, 3);
  auto ea = m.encode(a);
  CHECK((ea.value().data - m.encode(a).value().data).cwiseAbs().maxCoeff() == 0);
  CHECK((ea.value().data - m.encode(b).value().data).cwiseAbs().maxCoeff() > 0);
  CHECK_THROWS_AS(m.encode(Tensor<double>({3, 16, 64})), ConfigError);
  CHECK(desk_config().embedding_floats() == 128);
}

TEST_CASE("decoder output depends on the embedding") {
  const ModelConfig c = small_config();
  SnervModel<double> m(c);
  const auto f0 = frame<double>(c, 4), f1 = frame<double>(c, 5);
  NoGradGuard guard;
  const auto e0 = m.embed({}, f0, {}), e1 = m.embed({}, f1, {});
  const auto d0 = m.decode(e0).frame.value(), d1 = m.decode(e1).frame.value();
  CHECK((d0.data - d1.data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("detail restorer") {
  const ModelConfig c = small_config();
  SnervModel<double> m(c);
  const auto f = frame<double>(c, 6);
  NoGradGuard guard;
  const auto e = m.embed({}, f, {});
  const auto base = m.decode(e);
  for (int b = 1; b < 4; ++b) CHECK(base.bands.band(b).shape() == Shape{3, c.height / 2, c.width / 2});

  auto st = m.state();
  for (auto& [name, t] : st) {
    if (name.rfind("decoder.hfr.lh.", 0) == 0) t.data.array() += 0.01;
  }
  m.set_state(st);
  const auto moved = m.decode(e);
  CHECK((moved.bands.lh.value().data - base.bands.lh.value().data).cwiseAbs().maxCoeff() > 0);
  CHECK((moved.bands.hl.value().data - base.bands.hl.value().data).cwiseAbs().maxCoeff() == 0);
  CHECK((moved.bands.hh.value().data - base.bands.hh.value().data).cwiseAbs().maxCoeff() == 0);
  CHECK((moved.bands.ll.value().data - base.bands.ll.value().data).cwiseAbs().maxCoeff() == 0);

  zero_prefix(m, "decoder.hfr.");
  const auto z = m.decode(e);
  for (int b = 1; b < 4; ++b) CHECK(z.bands.band(b).value().data.isZero(0));
  Subbands<double> ll_only{z.bands.ll.value(), Tensor<double>({3, c.height / 2, c.width / 2}),
                           Tensor<double>({3, c.height / 2, c.width / 2}),
                           Tensor<double>({3, c.height / 2, c.width / 2})};
  CHECK((idwt2_haar(ll_only).data - z.frame.value().data).cwiseAbs().maxCoeff() == 0);
  // 2x2 blocks are constant
  const auto& fr = z.frame.value();
  CHECK(fr(0, 0, 0) == fr(0, 1, 1));
  CHECK(fr(2, 6, 8) == fr(2, 7, 9));
}

TEST_CASE("every parameter receives gradient") {
  // a 1x2 embedding leaves most 3x3 taps on padding, so use the 2x4 desk grid
  for (bool temporal : {false, true}) {
    ModelConfig c = desk_config();
    c.c0 = 16;
    c.n_rb = 1;
    c.temporal = temporal;
    SnervModel<float> m(c);
    const auto p = frame<float>(c, 7), f = frame<float>(c, 8), n = frame<float>(c, 9);
    auto out = m.decode(m.embed(p, f, n));
    auto loss = total_loss(out.frame, f, out.bands, dwt2_haar(f));
    m.params().zero_grad();
    backward(loss.total);
    std::size_t tensors = 0, reached = 0;
    Index elems = 0, nonzero = 0;
    for (const auto& v : m.params().all()) {
      ++tensors;
      if (v.grad().cwiseAbs().maxCoeff() > 0) ++reached;
      elems += v.size();
      nonzero += (v.grad().array() != 0).count();
    }
    CAPTURE(temporal);
    CHECK(reached == tensors);
    CHECK(static_cast<double>(nonzero) / static_cast<double>(elems) >= 0.99);
  }
}

TEST_CASE("fusion block gradient reaches all three taps") {
  ParameterSet<double> ps;
  Rng rng(1);
  FusionBlock<double> fb(ps, rng, "fb", 8, 6, 2, 1, 0.1);
  auto m = Var<double>::parameter("m", oracle::random_tensor<double>({8, 3, 4}, 10));
  auto u = Var<double>::parameter("u", oracle::random_tensor<double>({6, 6, 8}, 11));
  auto out = fb(m, u);
  CHECK(out.shape() == Shape{6, 6, 8});
  const auto t = oracle::random_tensor<double>(out.shape(), 12);
  auto loss = [&] { return sum(mul(fb(m, u), Var<double>::constant(t))); };
  CHECK(oracle::gradient_check<double>(m, loss, {0, 10, 50, 95}, 1e-3) < 1e-7);
  CHECK(oracle::gradient_check<double>(u, loss, {0, 33, 100, 287}, 1e-3) < 1e-7);
}

TEST_CASE("up block shapes") {
  ParameterSet<float> ps;
  Rng rng(2);
  UpBlock<float> same(ps, rng, "a", 4, 6, 1, 0.1f);
  UpBlock<float> twice(ps, rng, "b", 4, 5, 2, 0.1f);
  auto x = Var<float>::constant(oracle::random_tensor<float>({4, 8, 8}, 13));
  CHECK(same(x).shape() == Shape{6, 8, 8});
  CHECK(twice(x).shape() == Shape{5, 16, 16});
  twice.conv.weight.mutable_value().data.setZero();
  twice.conv.bias.mutable_value().data.setZero();
  CHECK(twice(x).value().data.isZero(0));
}

TEST_CASE("temporal up-sampling block") {
  for (auto kind : {TemporalBlock::kTub2d, TemporalBlock::kTub3d, TemporalBlock::kNerv}) {
    ParameterSet<float> ps;
    Rng rng(3);
    TemporalUpBlock<float> mid(ps, rng, "mid", kind, 6, 4, 2, false, 0.1f);
    TemporalUpBlock<float> last(ps, rng, "last", kind, 4, 5, 1, true, 0.1f);
    std::vector<Var<float>> s;
    for (int i = 0; i < 3; ++i) s.push_back(Var<float>::constant(oracle::random_tensor<float>({6, 4, 5}, 20 + i)));
    auto o = mid(s);
    REQUIRE(o.size() == 3);
    for (const auto& v : o) CHECK(v.shape() == Shape{4, 8, 10});
    auto merged = last(o);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].shape() == Shape{5, 8, 10});
    std::vector<Var<float>> same(3, s[1]);
    auto p = last(mid(same));
    std::vector<Var<float>> swapped{same[2], same[1], same[0]};
    auto q = last(mid(swapped));
    CHECK((p[0].value().data - q[0].value().data).cwiseAbs().maxCoeff() == 0);
  }
}

TEST_CASE("temporal model") {
  ModelConfig c = small_config();
  c.temporal = true;
  c.temporal_h = 4;
  c.temporal_w = 8;
  for (auto kind : {TemporalBlock::kTub2d, TemporalBlock::kTub3d, TemporalBlock::kNerv}) {
    c.temporal_block = kind;
    SnervModel<float> m(c);
    NoGradGuard guard;
    const auto f = frame<float>(c, 30);
    auto e = m.embed(f, f, f);
    CHECK(e.e_b.shape() == Shape{3, 4, 8});
    CHECK((e.e_b.value().data - e.e_f.value().data).cwiseAbs().maxCoeff() == 0);
    auto out = m.decode(e);
    CHECK(out.frame.shape() == Shape{3, c.height, c.width});
    e.e_b = Var<float>::constant(Tensor<float>({3, 4, 8}));
    e.e_f = Var<float>::constant(Tensor<float>({3, 4, 8}));
    CHECK(m.decode(e).frame.value().data.allFinite());
  }
  ModelConfig full = paper_backbone_640x1280();
  full.temporal = true;
  full.temporal_h = 20;
  full.temporal_w = 40;
  CHECK(full.embedding_floats() == 128 + 4800);
}

TEST_CASE("temporal encoder shapes from the encoder table") {
  struct Row {
    Index h, w;
    std::vector<int> backbone, temporal;
    Index th, tw;
  };
  const std::vector<Row> rows{{640, 1280, {5, 4, 2, 2, 2}, {2, 2, 2, 2}, 20, 40},
                              {640, 1280, {5, 4, 2, 2, 2}, {4, 2, 2, 2}, 10, 20},
                              {640, 1280, {5, 4, 2, 2, 2}, {4, 2, 2, 2, 2}, 5, 10}};
  for (const auto& r : rows) {
    ModelConfig c = paper_backbone_640x1280();
    c.c0 = 8;
    c.n_rb = 1;
    c.encoder_width = 4;
    c.temporal = true;
    c.temporal_encoder_strides = r.temporal;
    c.temporal_encoder_width = 4;
    c.temporal_h = r.th;
    c.temporal_w = r.tw;
    c.validate();
    SnervModel<float> m(c);
    NoGradGuard guard;
    const auto f = Tensor<float>::constant({3, r.h, r.w}, 0.5f);
    auto [eb, ef] = m.encode_temporal(f, f, f);
    CHECK(eb.shape() == Shape{3, r.th, r.tw});
  }
  // 480x960 with strides 2,2,2 lands on 30x60, not the tabulated 20x40
  ModelConfig c = desk_config();
  c.height = 480;
  c.width = 960;
  c.strides = {5, 3, 2, 2, 2};
  c.temporal = true;
  c.temporal_encoder_strides = {2, 2, 2};
  c.temporal_h = 20;
  c.temporal_w = 40;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.temporal_h = 30;
  c.temporal_w = 60;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parameter accounting") {
  const ModelConfig paper = paper_backbone_640x1280();
  SnervModel<float> m(paper);
  const auto pc = m.param_count();
  Index decoder = 0, encoder = 0;
  for (const auto& [name, t] : m.state()) {
    (name.rfind("decoder.", 0) == 0 ? decoder : encoder) += t.size();
  }
  CHECK(pc.decoder == decoder);
  CHECK(pc.encoder == encoder);
  CHECK(pc.embedding_floats_per_frame == 128);
  CHECK(std::abs(static_cast<double>(pc.decoder) - 3.0e6) <= 0.15 * 3.0e6);

  ModelConfig half = small_config();
  half.c0 = 20;
  ModelConfig dbl = half;
  dbl.c0 = 40;
  const auto w1 = SnervModel<float>(half).params().get("decoder.ub0.w").size();
  const auto w2 = SnervModel<float>(dbl).params().get("decoder.ub0.w").size();
  CHECK(w2 == 2 * w1);  // first UB reads the fixed 16-channel embedding
  const auto u1 = SnervModel<float>(half).params().get("decoder.ub1.w").size();
  const auto u2 = SnervModel<float>(dbl).params().get("decoder.ub1.w").size();
  CHECK(static_cast<double>(u2) / static_cast<double>(u1) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("matched temporal config stays within the backbone budget") {
  const ModelConfig backbone = desk_config();
  ModelConfig temporal = backbone;
  temporal.temporal = true;
  const Index frames = 12;
  const ModelConfig matched = matched_temporal_config(backbone, temporal, frames);
  const auto b = SnervModel<float>(backbone).param_count();
  const auto t = SnervModel<float>(matched).param_count();
  const double total_b = static_cast<double>(b.decoder + frames * backbone.embedding_floats());
  const double total_t = static_cast<double>(t.decoder + frames * matched.embedding_floats());
  CHECK(matched.c0 < backbone.c0);
  CHECK(total_t <= total_b);
  CHECK(static_cast<double>(t.decoder) <= 1.05 * static_cast<double>(b.decoder));
}

TEST_CASE("initialisation is deterministic in the seed") {
  const ModelConfig c = small_config();
  SnervModel<float> a(c), b(c);
  CHECK(parameter_hash(a.params()) == parameter_hash(b.params()));
  ModelConfig d = c;
  d.seed = 1;
  CHECK(parameter_hash(SnervModel<float>(d).params()) != parameter_hash(a.params()));
  auto st = a.state();
  st.emplace_back("decoder.nope", Tensor<float>({1}));
  CHECK_THROWS_AS(b.set_state(st), ConfigError);
}
