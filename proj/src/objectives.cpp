// SPDX-License-Identifier: Apache-2.0
#include "snerv/objectives.hpp"

#include <cmath>

#include "snerv/metrics.hpp"
#include "snerv/ops.hpp"

namespace snerv {

SsimWindow SsimWindow::fit(Index height, Index width) {
  SsimWindow w;
  const Index limit = std::min(height, width);
  if (limit >= w.size) return w;
  if (limit < 1) throw InputError("SSIM on an empty image");
  const int size = static_cast<int>(limit % 2 ? limit : limit - 1);
  w.sigma = w.sigma * size / w.size;
  w.size = size;
  return w;
}

namespace {

template <typename Scalar>
std::vector<Scalar> gaussian_taps(const SsimWindow& win) {
  std::vector<Scalar> taps(win.size);
  using A = Accum<Scalar>;
  const A r = (win.size - 1) / A(2);
  const A sigma = static_cast<A>(win.sigma);
  A total = 0;
  std::vector<A> tmp(win.size);
  for (int i = 0; i < win.size; ++i) {
    tmp[i] = std::exp(-(i - r) * (i - r) / (A(2) * sigma * sigma));
    total += tmp[i];
  }
  for (int i = 0; i < win.size; ++i) taps[i] = static_cast<Scalar>(tmp[i] / total);
  return taps;
}

// Separable "valid" Gaussian filter of an h x w plane.
template <typename Scalar>
RowMat<Scalar> filter_valid(const Eigen::Ref<const RowMat<Scalar>>& in,
                            const std::vector<Scalar>& taps) {
  const Index n = static_cast<Index>(taps.size());
  const Index h = in.rows(), w = in.cols(), oh = h - n + 1, ow = w - n + 1;
  RowMat<Scalar> horiz = RowMat<Scalar>::Zero(h, ow);
  for (Index y = 0; y < h; ++y) {
    for (Index i = 0; i < n; ++i) horiz.row(y) += taps[i] * in.row(y).segment(i, ow);
  }
  RowMat<Scalar> out = RowMat<Scalar>::Zero(oh, ow);
  for (Index i = 0; i < n; ++i) out += taps[i] * horiz.middleRows(i, oh);
  return out;
}

// Adjoint of filter_valid: scatters an oh x ow map back onto h x w.
template <typename Scalar>
RowMat<Scalar> filter_valid_adjoint(const RowMat<Scalar>& g, const std::vector<Scalar>& taps,
                                    Index h, Index w) {
  const Index n = static_cast<Index>(taps.size());
  const Index oh = g.rows(), ow = g.cols();
  RowMat<Scalar> horiz = RowMat<Scalar>::Zero(h, ow);
  for (Index i = 0; i < n; ++i) horiz.middleRows(i, oh) += taps[i] * g;
  RowMat<Scalar> out = RowMat<Scalar>::Zero(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index i = 0; i < n; ++i) out.row(y).segment(i, ow) += taps[i] * horiz.row(y);
  }
  return out;
}

template <typename Scalar>
struct SsimChannel {
  RowMat<Scalar> mx, my, a1, a2, b1, b2;
};

}  // namespace

template <typename Scalar>
Var<Scalar> ssim(const Var<Scalar>& x, const Var<Scalar>& y, double peak, SsimWindow window) {
  if (x.shape() != y.shape() || x.shape().size() != 3) {
    throw InputError("ssim expects two [C,H,W] tensors of equal shape");
  }
  const Index c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (h < window.size || w < window.size) {
    throw InputError("ssim: image " + to_string(x.shape()) + " smaller than the " +
                     std::to_string(window.size) + "x" + std::to_string(window.size) + " window");
  }
  const auto taps = gaussian_taps<Scalar>(window);
  const Scalar c1 = static_cast<Scalar>((0.01 * peak) * (0.01 * peak));
  const Scalar c2 = static_cast<Scalar>((0.03 * peak) * (0.03 * peak));
  const Index oh = h - window.size + 1, ow = w - window.size + 1;
  const Scalar count = static_cast<Scalar>(c * oh * ow);

  std::vector<SsimChannel<Scalar>> saved(c);
  Accum<Scalar> total = 0;
  for (Index ch = 0; ch < c; ++ch) {
    const auto px = x.value().plane(ch);
    const auto py = y.value().plane(ch);
    auto& s = saved[ch];
    s.mx = filter_valid<Scalar>(px, taps);
    s.my = filter_valid<Scalar>(py, taps);
    RowMat<Scalar> exx = filter_valid<Scalar>(px.cwiseAbs2(), taps);
    RowMat<Scalar> eyy = filter_valid<Scalar>(py.cwiseAbs2(), taps);
    RowMat<Scalar> exy = filter_valid<Scalar>(px.cwiseProduct(py), taps);
    const auto mxa = s.mx.array(), mya = s.my.array();
    s.a1 = (Scalar(2) * mxa * mya + c1).matrix();
    s.a2 = (Scalar(2) * (exy.array() - mxa * mya) + c2).matrix();
    s.b1 = (mxa.square() + mya.square() + c1).matrix();
    s.b2 = (exx.array() - mxa.square() + eyy.array() - mya.square() + c2).matrix();
    total += ((s.a1.array() * s.a2.array()) / (s.b1.array() * s.b2.array()))
                 .template cast<Accum<Scalar>>()
                 .sum();
  }
  Tensor<Scalar> out({1}, Vec<Scalar>::Constant(1, static_cast<Scalar>(total / count)));

  return make_result<Scalar>(
      std::move(out), {x, y},
      [saved = std::move(saved), taps, c, h, w, count](Node<Scalar>& self) {
        Node<Scalar>& nx = *self.inputs[0];
        Node<Scalar>& ny = *self.inputs[1];
        const Scalar up = self.grad[0] / count;
        for (Index ch = 0; ch < c; ++ch) {
          const auto& s = saved[ch];
          const auto a1 = s.a1.array(), a2 = s.a2.array(), b1 = s.b1.array(),
                     b2 = s.b2.array(), mx = s.mx.array(), my = s.my.array();
          const auto den = b1 * b2;
          const auto smap = a1 * a2 / den;
          // dS/d(local statistics); exx and eyy share -S/B2.
          RowMat<Scalar> g_e2 = (up * (-smap / b2)).matrix();
          RowMat<Scalar> g_exy = (up * (Scalar(2) * a1 / den)).matrix();
          const auto px = nx.value.plane(ch);
          const auto py = ny.value.plane(ch);
          RowMat<Scalar> back_e2 = filter_valid_adjoint<Scalar>(g_e2, taps, h, w);
          RowMat<Scalar> back_exy = filter_valid_adjoint<Scalar>(g_exy, taps, h, w);
          if (nx.requires_grad) {
            RowMat<Scalar> g_mx =
                (up * ((Scalar(2) * my * (a2 - a1)) / den -
                       smap * (Scalar(2) * mx / b1 - Scalar(2) * mx / b2)))
                    .matrix();
            RowMat<Scalar> dx = filter_valid_adjoint<Scalar>(g_mx, taps, h, w);
            dx.array() += Scalar(2) * px.array() * back_e2.array() + py.array() * back_exy.array();
            Eigen::Map<RowMat<Scalar>>(nx.grad_buffer().data() + ch * h * w, h, w) += dx;
          }
          if (ny.requires_grad) {
            RowMat<Scalar> g_my =
                (up * ((Scalar(2) * mx * (a2 - a1)) / den -
                       smap * (Scalar(2) * my / b1 - Scalar(2) * my / b2)))
                    .matrix();
            RowMat<Scalar> dy = filter_valid_adjoint<Scalar>(g_my, taps, h, w);
            dy.array() += Scalar(2) * py.array() * back_e2.array() + px.array() * back_exy.array();
            Eigen::Map<RowMat<Scalar>>(ny.grad_buffer().data() + ch * h * w, h, w) += dy;
          }
        }
      });
}

template <typename Scalar>
double ssim_value(const Tensor<Scalar>& x, const Tensor<Scalar>& y, double peak,
                  SsimWindow window) {
  NoGradGuard guard;
  return static_cast<double>(
      ssim(Var<Scalar>::constant(x), Var<Scalar>::constant(y), peak, window).item());
}

template <typename Scalar>
double psnr(const Tensor<Scalar>& x, const Tensor<Scalar>& y, double peak, bool clamp) {
  if (!x.same_shape(y)) throw InputError("psnr: shape mismatch");
  if (x.size() == 0) throw InputError("psnr of empty tensors");
  Eigen::ArrayXd a = x.data.template cast<double>().array();
  Eigen::ArrayXd b = y.data.template cast<double>().array();
  if (clamp) {
    a = a.max(0.0).min(peak);
    b = b.max(0.0).min(peak);
  }
  return psnr_from_mse((a - b).square().mean(), peak);
}

template <typename Scalar>
double frame_ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& y) {
  Tensor<Scalar> a(x.shape, x.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)));
  Tensor<Scalar> b(y.shape, y.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)));
  return ssim_value(a, b, 1.0, SsimWindow::fit(x.height(), x.width()));
}

template <typename Scalar>
Var<Scalar> frame_loss(const Var<Scalar>& pred, const Var<Scalar>& truth, double alpha,
                       double peak) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (pred.shape() != truth.shape()) throw InputError("frame_loss: shape mismatch");
  const Scalar a = static_cast<Scalar>(alpha);
  Var<Scalar> l1;
  Var<Scalar> structural;
  if (alpha > 0.0) l1 = affine(mean(abs(sub(pred, truth))), a, Scalar(0));
  if (alpha < 1.0) {
    const auto window = SsimWindow::fit(pred.shape()[1], pred.shape()[2]);
    structural = affine(ssim(pred, truth, peak, window), a - Scalar(1), Scalar(1) - a);
  }
  if (!l1.defined()) return structural;
  if (!structural.defined()) return l1;
  return add(l1, structural);
}

template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& pred_frame, const Tensor<Scalar>& truth_frame,
                             const SubbandVars<Scalar>& pred_bands,
                             const Subbands<Scalar>& truth_bands, double alpha,
                             bool use_coeff_loss) {
  LossTerms<Scalar> out;
  Var<Scalar> frame = frame_loss(pred_frame, Var<Scalar>::constant(truth_frame), alpha, 1.0);
  out.breakdown.frame_loss = static_cast<double>(frame.item());
  if (!use_coeff_loss) {
    out.total = frame;
    out.breakdown.total = out.breakdown.frame_loss;
    return out;
  }
  Var<Scalar> acc;
  for (int i = 0; i < 4; ++i) {
    Var<Scalar> band = frame_loss(pred_bands.band(i), Var<Scalar>::constant(truth_bands.band(i)),
                                  alpha, kCoefficientPeak);
    out.breakdown.per_band[i] = static_cast<double>(band.item());
    acc = acc.defined() ? add(acc, band) : band;
  }
  Var<Scalar> coeff = affine(acc, Scalar(0.25), Scalar(0));
  out.breakdown.coeff_loss = static_cast<double>(coeff.item());
  out.breakdown.total = out.breakdown.frame_loss + out.breakdown.coeff_loss;
  out.total = add(frame, coeff);
  return out;
}

#define SNERV_INSTANTIATE(S)                                                               \
  template Var<S> ssim<S>(const Var<S>&, const Var<S>&, double, SsimWindow);               \
  template double ssim_value<S>(const Tensor<S>&, const Tensor<S>&, double, SsimWindow);   \
  template double psnr<S>(const Tensor<S>&, const Tensor<S>&, double, bool);               \
  template double frame_ssim<S>(const Tensor<S>&, const Tensor<S>&);                       \
  template Var<S> frame_loss<S>(const Var<S>&, const Var<S>&, double, double);             \
  template LossTerms<S> total_loss<S>(const Var<S>&, const Tensor<S>&, const SubbandVars<S>&, \
                                      const Subbands<S>&, double, bool);

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
SNERV_INSTANTIATE(long double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
