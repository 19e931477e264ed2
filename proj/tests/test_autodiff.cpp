// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"
#include "snerv/ops.hpp"
#include "snerv/optim.hpp"

using namespace snerv;

namespace {

template <typename S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  REQUIRE(a.shape == b.shape);
  return static_cast<double>((a.data - b.data).cwiseAbs().maxCoeff());
}

template <typename S>
Var<S> param(const std::string& name, Shape shape, std::uint64_t seed) {
  return Var<S>::parameter(name, oracle::random_tensor<S>(std::move(shape), seed));
}

}  // namespace

TEST_CASE("conv2d identity kernel and shapes") {
  auto x = Var<float>::constant(Tensor<float>::constant({1, 3, 3}, 1.0f));
  auto w = Var<float>::constant(Tensor<float>::constant({1, 1, 1, 1}, 1.0f));
  auto b = Var<float>::constant(Tensor<float>::zeros({1}));
  auto y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 3, 3});
  CHECK(y.value().data.isApproxToConstant(1.0f));

  auto x4 = Var<float>::constant(Tensor<float>({1, 4, 4}));
  auto w3 = Var<float>::constant(Tensor<float>({2, 1, 3, 3}));
  CHECK(conv2d(x4, w3, Var<float>(), 1, 1).shape() == Shape{2, 4, 4});
  CHECK_THROWS_AS(conv2d(x4, Var<float>::constant(Tensor<float>({1, 1, 7, 7})), Var<float>(), 1, 0),
                  ConfigError);
}

TEST_CASE("conv2d matches the sliding-window oracle") {
  const auto x = oracle::random_tensor<float>({2, 5, 5}, 1);
  const auto w = oracle::random_tensor<float>({3, 2, 3, 3}, 2);
  const auto b = oracle::random_tensor<float>({3}, 3);
  auto y = conv2d(Var<float>::constant(x), Var<float>::constant(w), Var<float>::constant(b), 2, 1);
  CHECK(max_abs_diff(y.value(), oracle::conv2d(x, w, &b, 2, 1)) < 1e-5);

  for (int s : {1, 2, 3}) {
    for (int p : {0, 1, 2}) {
      const auto xi = oracle::random_tensor<float>({3, 9, 7}, 10 + s * 3 + p);
      const auto wi = oracle::random_tensor<float>({4, 3, 3, 3}, 20 + s * 3 + p);
      auto yi = conv2d(Var<float>::constant(xi), Var<float>::constant(wi), Var<float>(), s, p);
      CHECK(max_abs_diff(yi.value(), oracle::conv2d<float>(xi, wi, nullptr, s, p)) < 1e-5);
    }
  }
}

TEST_CASE("conv_transpose2d shapes, bias broadcast and scatter oracle") {
  auto x = Var<float>::constant(Tensor<float>({1, 2, 2}));
  auto w = Var<float>::constant(oracle::random_tensor<float>({1, 1, 2, 2}, 4));
  auto b = Var<float>::constant(Tensor<float>::constant({1}, 0.25f));
  auto y = conv_transpose2d(x, w, b, 2, 0);
  CHECK(y.shape() == Shape{1, 4, 4});
  CHECK(y.value().data.isApproxToConstant(0.25f));

  for (int s : {1, 2, 3}) {
    const int k = s + 2;
    const auto xi = oracle::random_tensor<float>({3, 4, 5}, 30 + s);
    const auto wi = oracle::random_tensor<float>({3, 2, k, k}, 40 + s);
    const auto bi = oracle::random_tensor<float>({2}, 50 + s);
    auto yi = conv_transpose2d(Var<float>::constant(xi), Var<float>::constant(wi),
                               Var<float>::constant(bi), s, 1);
    CHECK(max_abs_diff(yi.value(), oracle::conv_transpose2d(xi, wi, &bi, s, 1)) < 1e-5);
    CHECK(yi.shape()[1] == conv_transpose_output_size(4, k, s, 1));
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, conv_T(y)> with the weight reinterpreted [Cin,Cout,k,k]
  const auto x = oracle::random_tensor<double>({2, 8, 8}, 5);
  const auto w = oracle::random_tensor<double>({3, 2, 4, 4}, 6);
  auto cx = conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>(), 2, 1);
  const auto y = oracle::random_tensor<double>(cx.shape(), 7);
  auto ty = conv_transpose2d(Var<double>::constant(y), Var<double>::constant(w), Var<double>(), 2, 1);
  REQUIRE(ty.shape() == x.shape);
  CHECK(cx.value().data.dot(y.data) == doctest::Approx(x.data.dot(ty.value().data)).epsilon(1e-12));
}

TEST_CASE("pixel_shuffle index formula") {
  Tensor<float> t({4, 1, 1});
  for (int i = 0; i < 4; ++i) t.data[i] = static_cast<float>(i);
  auto y = pixel_shuffle(Var<float>::constant(t), 2);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.value()(0, 0, 0) == 0);
  CHECK(y.value()(0, 0, 1) == 1);
  CHECK(y.value()(0, 1, 0) == 2);
  CHECK(y.value()(0, 1, 1) == 3);

  const auto x = oracle::random_tensor<float>({18, 3, 4}, 8);
  auto ps = pixel_shuffle(Var<float>::constant(x), 3);
  bool formula = true;
  for (Index c = 0; c < 2; ++c)
    for (Index h = 0; h < 3; ++h)
      for (Index w = 0; w < 4; ++w)
        for (Index a = 0; a < 3; ++a)
          for (Index b = 0; b < 3; ++b)
            formula = formula && ps.value()(c, h * 3 + a, w * 3 + b) == x(c * 9 + a * 3 + b, h, w);
  CHECK(formula);
  CHECK(max_abs_diff(pixel_shuffle(Var<float>::constant(x), 1).value(), x) == 0);
  CHECK(max_abs_diff(pixel_unshuffle(ps, 3).value(), x) == 0);
}

TEST_CASE("leaky_relu") {
  Tensor<float> t({2, 1, 1});
  t.data << 1.0f, -1.0f;
  auto y = leaky_relu(Var<float>::constant(t), 0.1f);
  CHECK(y.value().data[0] == 1.0f);
  CHECK(y.value().data[1] == doctest::Approx(-0.1f));
  const auto pos = oracle::random_tensor<float>({2, 3, 3}, 9, 0, 1);
  CHECK(max_abs_diff(leaky_relu(Var<float>::constant(pos), 0.1f).value(), pos) == 0);
  const auto any = oracle::random_tensor<float>({2, 3, 3}, 10);
  CHECK(max_abs_diff(leaky_relu(Var<float>::constant(any), 1.0f).value(), any) == 0);
}

TEST_CASE("concat and slice channels") {
  const auto a = oracle::random_tensor<float>({1, 2, 2}, 11);
  const auto b = oracle::random_tensor<float>({2, 2, 2}, 12);
  auto c = concat_channels(Var<float>::constant(a), Var<float>::constant(b));
  CHECK(c.shape() == Shape{3, 2, 2});
  CHECK(max_abs_diff(slice_channels(c, 0, 1).value(), a) == 0);
  CHECK(max_abs_diff(slice_channels(c, 1, 2).value(), b) == 0);
  auto e = concat_channels(Var<float>::constant(a), Var<float>::constant(Tensor<float>({0, 2, 2})));
  CHECK(max_abs_diff(e.value(), a) == 0);
}

TEST_CASE("linear loss gradient and disconnected parameters") {
  const auto x = oracle::random_tensor<double>({2, 3, 3}, 13);
  auto w = param<double>("w", {2, 3, 3}, 14);
  auto unused = param<double>("unused", {4}, 15);
  backward(sum(mul(w, Var<double>::constant(x))));
  CHECK((w.grad() - x.data).cwiseAbs().maxCoeff() == 0);
  CHECK(unused.grad().size() == 4);
  CHECK(unused.grad().isZero(0));
}

TEST_CASE("backward rejects non-scalar losses") {
  auto w = param<double>("w", {2, 1, 1}, 16);
  CHECK_THROWS_AS(backward(w), UsageError);
}

TEST_CASE("ParameterSet names are unique") {
  ParameterSet<float> ps;
  ps.add("a", Tensor<float>({2}));
  CHECK_THROWS_AS(ps.add("a", Tensor<float>({2})), ConfigError);
  CHECK(ps.total_elements() == 2);
}

TEST_CASE("NoGradGuard detaches results") {
  auto w = param<float>("w", {1, 2, 2}, 17);
  {
    NoGradGuard guard;
    CHECK(NoGradGuard::active());
    CHECK_FALSE(leaky_relu(w, 0.1f).requires_grad());
  }
  CHECK_FALSE(NoGradGuard::active());
  CHECK(leaky_relu(w, 0.1f).requires_grad());
}

TEST_CASE_TEMPLATE("op gradients match central differences", S, float, double) {
  const double h = std::is_same_v<S, float> ? 1e-2 : 1e-6;
  const double tol = std::is_same_v<S, float> ? 2e-2 : 1e-6;
  const std::vector<Index> entries{0, 3, 7, 11, 17};

  SUBCASE("conv2d stride 2 pad 1") {
    auto x = param<S>("x", {2, 6, 5}, 18);
    auto w = param<S>("w", {3, 2, 3, 3}, 19);
    auto b = param<S>("b", {3}, 20);
    const auto t = oracle::random_tensor<S>({3, 3, 3}, 21);
    auto loss = [&] { return sum(mul(conv2d(x, w, b, 2, 1), Var<S>::constant(t))); };
    CHECK(oracle::gradient_check<S>(x, loss, entries, h) < tol);
    CHECK(oracle::gradient_check<S>(w, loss, entries, h) < tol);
    CHECK(oracle::gradient_check<S>(b, loss, {0, 1, 2}, h) < tol);
  }
  SUBCASE("conv_transpose2d stride 3") {
    auto x = param<S>("x", {2, 3, 4}, 22);
    auto w = param<S>("w", {2, 3, 5, 5}, 23);
    auto b = param<S>("b", {3}, 24);
    auto probe = conv_transpose2d(x, w, b, 3, 1);
    const auto t = oracle::random_tensor<S>(probe.shape(), 25);
    auto loss = [&] { return sum(mul(conv_transpose2d(x, w, b, 3, 1), Var<S>::constant(t))); };
    CHECK(oracle::gradient_check<S>(x, loss, entries, h) < tol);
    CHECK(oracle::gradient_check<S>(w, loss, entries, h) < tol);
  }
  SUBCASE("shuffle, leaky, abs and mean chain") {
    auto x = param<S>("x", {8, 3, 2}, 26);
    auto loss = [&] {
      auto y = leaky_relu(pixel_shuffle(x, 2), S(0.1));
      return mean(abs(affine(y, S(2), S(0.3))));
    };
    CHECK(oracle::gradient_check<S>(x, loss, entries, h) < tol);
  }
  SUBCASE("concat, slice, sub") {
    auto a = param<S>("a", {2, 3, 3}, 27);
    auto b = param<S>("b", {1, 3, 3}, 28);
    auto loss = [&] {
      auto c = concat_channels(a, b);
      auto d = sub(slice_channels(c, 1, 2), slice_channels(c, 0, 2));
      return sum(mul(d, d));
    };
    CHECK(oracle::gradient_check<S>(a, loss, entries, h) < tol);
    CHECK(oracle::gradient_check<S>(b, loss, {0, 4, 8}, h) < tol);
  }
}

TEST_CASE("Adam first step") {
  ParameterSet<double> ps;
  auto p = ps.add("p", Tensor<double>::constant({1}, 0.5));
  OptimState<double> st(ps, 1e-3, 10);
  p.grad()[0] = 1.0;
  adam_step(st, ps, 1e-3);
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
  CHECK(p.value().data[0] == doctest::Approx(0.5 - 1e-3 / (1 + 1e-8)).epsilon(1e-12));
  CHECK(st.step == 1);

  ParameterSet<double> zs;
  auto z = zs.add("z", Tensor<double>::constant({3}, 0.25));
  OptimState<double> zst(zs, 1e-3, 10);
  adam_step(zst, zs, 1e-3);
  CHECK(z.value().data.isApproxToConstant(0.25, 0));
}

TEST_CASE("Adam runs are bitwise reproducible") {
  auto run = [] {
    ParameterSet<float> ps;
    auto w = ps.add("w", oracle::random_tensor<float>({3, 2, 3, 3}, 29));
    OptimState<float> st(ps, 1e-3, 5);
    const auto x = oracle::random_tensor<float>({2, 6, 6}, 30);
    for (int i = 0; i < 5; ++i) {
      ps.zero_grad();
      backward(mean(abs(conv2d(Var<float>::constant(x), w, Var<float>(), 1, 1))));
      adam_step(st, ps, cosine_lr(st.step, 5, 1e-3));
    }
    return w.value().data;
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(float)) == 0);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 1e-3) == doctest::Approx(1e-3));
  CHECK(cosine_lr(100, 100, 1e-3) == doctest::Approx(0.0));
  CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(5e-4));
  CHECK(cosine_lr(10, 110, 1e-3, 10) == doctest::Approx(1e-3));
  CHECK(cosine_lr(60, 110, 1e-3, 10) == doctest::Approx(5e-4));
  CHECK(cosine_lr(5, 110, 1e-3, 10) < 1e-3);
}

TEST_CASE("gradient clipping") {
  ParameterSet<double> ps;
  auto p = ps.add("p", Tensor<double>({2}));
  p.grad() << 3.0, 4.0;
  CHECK(grad_norm(ps) == doctest::Approx(5.0));
  clip_grad_norm(ps, 1.0);
  CHECK(grad_norm(ps) == doctest::Approx(1.0));
}
