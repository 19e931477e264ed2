// SPDX-License-Identifier: Apache-2.0
#include "snerv/wavelet.hpp"

#include <cmath>
#include <numbers>

#include "snerv/metrics.hpp"

namespace snerv {

template <typename Scalar>
const Tensor<Scalar>& Subbands<Scalar>::band(int i) const {
  switch (i) {
    case 0: return ll;
    case 1: return lh;
    case 2: return hl;
    case 3: return hh;
  }
  throw UsageError("band index out of range");
}

template <typename Scalar>
Tensor<Scalar>& Subbands<Scalar>::band(int i) {
  return const_cast<Tensor<Scalar>&>(std::as_const(*this).band(i));
}

template <typename Scalar>
const Var<Scalar>& SubbandVars<Scalar>::band(int i) const {
  switch (i) {
    case 0: return ll;
    case 1: return lh;
    case 2: return hl;
    case 3: return hh;
  }
  throw UsageError("band index out of range");
}

template <typename Scalar>
Subbands<Scalar> dwt2_haar(const Tensor<Scalar>& frame) {
  if (frame.rank() != 3) throw InputError("dwt2_haar expects [C,H,W], got " + to_string(frame.shape));
  const Index c = frame.channels(), h = frame.height(), w = frame.width();
  if (h % 2 || w % 2) {
    throw InputError("dwt2_haar requires even height and width, got " + to_string(frame.shape));
  }
  const Shape half{c, h / 2, w / 2};
  Subbands<Scalar> out{Tensor<Scalar>(half), Tensor<Scalar>(half), Tensor<Scalar>(half),
                       Tensor<Scalar>(half)};
  const Scalar k = Scalar(0.5);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < h / 2; ++y) {
      for (Index x = 0; x < w / 2; ++x) {
        const Scalar a = frame(ch, 2 * y, 2 * x), b = frame(ch, 2 * y, 2 * x + 1);
        const Scalar cc = frame(ch, 2 * y + 1, 2 * x), d = frame(ch, 2 * y + 1, 2 * x + 1);
        out.ll(ch, y, x) = k * (a + b + cc + d);
        out.lh(ch, y, x) = k * (a + b - cc - d);
        out.hl(ch, y, x) = k * (a - b + cc - d);
        out.hh(ch, y, x) = k * (a - b - cc + d);
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> idwt2_haar(const Subbands<Scalar>& bands) {
  const Shape& s = bands.ll.shape;
  if (s.size() != 3 || bands.lh.shape != s || bands.hl.shape != s || bands.hh.shape != s) {
    throw InputError("idwt2_haar: inconsistent sub-band shapes");
  }
  const Index c = s[0], h = s[1], w = s[2];
  Tensor<Scalar> frame({c, 2 * h, 2 * w});
  const Scalar k = Scalar(0.5);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const Scalar ll = bands.ll(ch, y, x), lh = bands.lh(ch, y, x);
        const Scalar hl = bands.hl(ch, y, x), hh = bands.hh(ch, y, x);
        frame(ch, 2 * y, 2 * x) = k * (ll + lh + hl + hh);
        frame(ch, 2 * y, 2 * x + 1) = k * (ll + lh - hl - hh);
        frame(ch, 2 * y + 1, 2 * x) = k * (ll - lh + hl - hh);
        frame(ch, 2 * y + 1, 2 * x + 1) = k * (ll - lh - hl + hh);
      }
    }
  }
  return frame;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> dwt_temporal_pair(const Tensor<Scalar>& a,
                                                            const Tensor<Scalar>& b) {
  if (!a.same_shape(b)) {
    throw InputError("dwt_temporal_pair: shape mismatch " + to_string(a.shape) + " vs " +
                     to_string(b.shape));
  }
  const Scalar r = Scalar(1.0 / std::numbers::sqrt2);
  return {Tensor<Scalar>(a.shape, r * (a.data + b.data)),
          Tensor<Scalar>(a.shape, r * (a.data - b.data))};
}

template <typename Scalar>
BandPsnr subband_psnr(const Subbands<Scalar>& pred, const Subbands<Scalar>& truth) {
  double out[4];
  for (int i = 0; i < 4; ++i) {
    const auto& p = pred.band(i);
    const auto& t = truth.band(i);
    if (!p.same_shape(t)) throw InputError("subband_psnr: shape mismatch");
    const double mse = (p.data.template cast<double>() - t.data.template cast<double>())
                           .squaredNorm() /
                       static_cast<double>(std::max<Index>(p.size(), 1));
    out[i] = psnr_from_mse(mse, kCoefficientPeak);
  }
  return {out[0], out[1], out[2], out[3]};
}

template <typename Scalar>
Var<Scalar> idwt2_haar(const SubbandVars<Scalar>& bands) {
  Tensor<Scalar> frame = idwt2_haar(bands.values());
  return make_result<Scalar>(std::move(frame), {bands.ll, bands.lh, bands.hl, bands.hh},
                             [](Node<Scalar>& self) {
                               // Orthonormal: the adjoint of synthesis is analysis.
                               Subbands<Scalar> g = dwt2_haar(
                                   Tensor<Scalar>(self.value.shape, self.grad));
                               for (int i = 0; i < 4; ++i) {
                                 if (self.inputs[i]->requires_grad) {
                                   self.inputs[i]->accumulate(g.band(i).data);
                                 }
                               }
                             });
}

template <typename Scalar>
SubbandVars<Scalar> dwt2_haar(const Var<Scalar>& frame) {
  Subbands<Scalar> sb = dwt2_haar(frame.value());
  SubbandVars<Scalar> out;
  for (int i = 0; i < 4; ++i) {
    const Shape half = sb.band(i).shape;
    // Each band's adjoint is the synthesis of that band alone.
    Var<Scalar> v = make_result<Scalar>(std::move(sb.band(i)), {frame},
                                        [i, half](Node<Scalar>& self) {
                                          Subbands<Scalar> g{Tensor<Scalar>(half),
                                                             Tensor<Scalar>(half),
                                                             Tensor<Scalar>(half),
                                                             Tensor<Scalar>(half)};
                                          g.band(i).data = self.grad;
                                          self.inputs[0]->accumulate(idwt2_haar(g).data);
                                        });
    switch (i) {
      case 0: out.ll = v; break;
      case 1: out.lh = v; break;
      case 2: out.hl = v; break;
      default: out.hh = v; break;
    }
  }
  return out;
}

#define SNERV_INSTANTIATE(S)                                                                   \
  template struct Subbands<S>;                                                                 \
  template struct SubbandVars<S>;                                                              \
  template Subbands<S> dwt2_haar<S>(const Tensor<S>&);                                         \
  template Tensor<S> idwt2_haar<S>(const Subbands<S>&);                                        \
  template std::pair<Tensor<S>, Tensor<S>> dwt_temporal_pair<S>(const Tensor<S>&, const Tensor<S>&); \
  template BandPsnr subband_psnr<S>(const Subbands<S>&, const Subbands<S>&);                   \
  template Var<S> idwt2_haar<S>(const SubbandVars<S>&);                                        \
  template SubbandVars<S> dwt2_haar<S>(const Var<S>&);

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
SNERV_INSTANTIATE(long double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
