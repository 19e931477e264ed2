// SPDX-License-Identifier: Apache-2.0
#include "snerv/ops.hpp"

#include <algorithm>
#include <cmath>

namespace snerv {

Index conv_output_size(Index in, int kernel, int stride, int pad) {
  if (stride < 1) throw ConfigError("convolution stride must be >= 1");
  if (in + 2 * pad < kernel) {
    throw ConfigError("convolution input " + std::to_string(in) + " with padding " +
                      std::to_string(pad) + " is smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Index conv_transpose_output_size(Index in, int kernel, int stride, int pad) {
  if (stride < 1) throw ConfigError("transposed convolution stride must be >= 1");
  Index out = (in - 1) * stride - 2 * pad + kernel;
  if (out <= 0) {
    throw ConfigError("transposed convolution output size " + std::to_string(out) +
                      " is not positive");
  }
  return out;
}

namespace {

struct ConvGeometry {
  Index channels, height, width;  // full-resolution side
  int kernel, stride, pad;
  Index out_h, out_w;             // sliding-window grid
  Index rows() const { return out_h * out_w; }
  Index cols() const { return channels * kernel * kernel; }
};

// cols is (out_h*out_w) x (C*k*k), column-major; column index c*k*k + ky*k + kx.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* cols) {
  const Index rows = g.rows();
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* xc = x + c * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        Scalar* col = cols + ((c * g.kernel + ky) * g.kernel + kx) * rows;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          Scalar* dst = col + oy * g.out_w;
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = xc + iy * g.width;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Scatter-add adjoint of im2col.
template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* x) {
  const Index rows = g.rows();
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* xc = x + c * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const Scalar* col = cols + ((c * g.kernel + ky) * g.kernel + kx) * rows;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const Scalar* src = col + oy * g.out_w;
          Scalar* dst = xc + iy * g.width;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ConfigError(std::string(what) + " expects rank " + std::to_string(rank) +
                      ", got shape " + to_string(s));
  }
}

template <typename Scalar>
void check_bias(const Var<Scalar>& bias, Index channels, const char* what) {
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != channels)) {
    throw ConfigError(std::string(what) + " bias shape " + to_string(bias.shape()) +
                      " does not match " + std::to_string(channels) + " output channels");
  }
}

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   int stride, int pad) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const Shape& ws = weight.shape();
  const Index cin = input.shape()[0], cout = ws[0];
  if (ws[1] != cin) {
    throw ConfigError("conv2d weight expects " + std::to_string(ws[1]) + " input channels, got " +
                      std::to_string(cin));
  }
  if (ws[2] != ws[3]) throw ConfigError("conv2d kernel must be square");
  check_bias(bias, cout, "conv2d");
  const int k = static_cast<int>(ws[2]);
  ConvGeometry g{cin, input.shape()[1], input.shape()[2], k, stride, pad, 0, 0};
  g.out_h = conv_output_size(g.height, k, stride, pad);
  g.out_w = conv_output_size(g.width, k, stride, pad);

  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  Mat<Scalar> cols;
  if (!pointwise) {
    cols.resize(g.rows(), g.cols());
    im2col(input.value().data.data(), g, cols.data());
  }
  Eigen::Map<const Mat<Scalar>> wmat(weight.value().data.data(), g.cols(), cout);

  Tensor<Scalar> out({cout, g.out_h, g.out_w});
  auto omat = out.pixels_by_channel();
  if (pointwise) {
    omat.noalias() = input.value().pixels_by_channel() * wmat;
  } else {
    omat.noalias() = cols * wmat;
  }
  if (bias.defined()) omat.rowwise() += bias.value().data.transpose();

  std::vector<Var<Scalar>> inputs{input, weight};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias);
  return make_result<Scalar>(
      std::move(out), std::move(inputs),
      [g, cout, pointwise, has_bias, cols = std::move(cols)](Node<Scalar>& self) {
        Node<Scalar>& x = *self.inputs[0];
        Node<Scalar>& w = *self.inputs[1];
        Eigen::Map<const Mat<Scalar>> grad(self.grad.data(), g.rows(), cout);
        Eigen::Map<const Mat<Scalar>> wmat(w.value.data.data(), g.cols(), cout);
        if (w.requires_grad) {
          Eigen::Map<Mat<Scalar>> dw(w.grad_buffer().data(), g.cols(), cout);
          if (pointwise) {
            dw.noalias() += x.value.pixels_by_channel().transpose() * grad;
          } else {
            dw.noalias() += cols.transpose() * grad;
          }
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          self.inputs[2]->grad_buffer() += grad.colwise().sum().transpose();
        }
        if (x.requires_grad) {
          Vec<Scalar>& dx = x.grad_buffer();
          if (pointwise) {
            Eigen::Map<Mat<Scalar>> dxm(dx.data(), g.rows(), g.channels);
            dxm.noalias() += grad * wmat.transpose();
          } else {
            Mat<Scalar> dcols = grad * wmat.transpose();
            col2im(dcols.data(), g, dx.data());
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& input, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, int stride, int pad) {
  require_rank(input.shape(), 3, "conv_transpose2d input");
  require_rank(weight.shape(), 4, "conv_transpose2d weight");
  const Shape& ws = weight.shape();
  const Index cin = input.shape()[0], cout = ws[1];
  if (ws[0] != cin) {
    throw ConfigError("conv_transpose2d weight expects " + std::to_string(ws[0]) +
                      " input channels, got " + std::to_string(cin));
  }
  if (ws[2] != ws[3]) throw ConfigError("conv_transpose2d kernel must be square");
  check_bias(bias, cout, "conv_transpose2d");
  const int k = static_cast<int>(ws[2]);
  const Index h = input.shape()[1], w = input.shape()[2];
  // Geometry of the equivalent forward convolution, which maps the output
  // grid back onto the input grid.
  ConvGeometry g{cout, conv_transpose_output_size(h, k, stride, pad),
                 conv_transpose_output_size(w, k, stride, pad), k, stride, pad, h, w};

  Eigen::Map<const Mat<Scalar>> wmat(weight.value().data.data(), g.cols(), cin);
  Mat<Scalar> cols = input.value().pixels_by_channel() * wmat.transpose();
  Tensor<Scalar> out({cout, g.height, g.width});
  col2im(cols.data(), g, out.data.data());
  if (bias.defined()) out.pixels_by_channel().rowwise() += bias.value().data.transpose();

  std::vector<Var<Scalar>> inputs{input, weight};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias);
  return make_result<Scalar>(
      std::move(out), std::move(inputs), [g, cin, has_bias](Node<Scalar>& self) {
        Node<Scalar>& x = *self.inputs[0];
        Node<Scalar>& w = *self.inputs[1];
        Mat<Scalar> dcols(g.rows(), g.cols());
        im2col(self.grad.data(), g, dcols.data());
        Eigen::Map<const Mat<Scalar>> wmat(w.value.data.data(), g.cols(), cin);
        if (x.requires_grad) {
          Eigen::Map<Mat<Scalar>> dx(x.grad_buffer().data(), g.rows(), cin);
          dx.noalias() += dcols * wmat;
        }
        if (w.requires_grad) {
          Eigen::Map<Mat<Scalar>> dw(w.grad_buffer().data(), g.cols(), cin);
          dw.noalias() += dcols.transpose() * x.value.pixels_by_channel();
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          Eigen::Map<const Mat<Scalar>> grad(self.grad.data(), g.height * g.width, g.channels);
          self.inputs[2]->grad_buffer() += grad.colwise().sum().transpose();
        }
      });
}

namespace {

// Moves data between [C*s*s, H, W] and [C, H*s, W*s]. When `shuffle` the
// source is the packed layout; otherwise the spatial one.
template <typename Scalar>
void shuffle_copy(const Scalar* src, Scalar* dst, Index c_out, Index h, Index w, int s,
                  bool shuffle) {
  const Index oh = h * s, ow = w * s;
  for (Index c = 0; c < c_out; ++c) {
    for (int a = 0; a < s; ++a) {
      for (int b = 0; b < s; ++b) {
        const Index packed_c = c * s * s + a * s + b;
        for (Index y = 0; y < h; ++y) {
          for (Index x = 0; x < w; ++x) {
            const Index packed = (packed_c * h + y) * w + x;
            const Index spatial = (c * oh + y * s + a) * ow + x * s + b;
            if (shuffle) {
              dst[spatial] = src[packed];
            } else {
              dst[packed] = src[spatial];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& input, int factor) {
  require_rank(input.shape(), 3, "pixel_shuffle input");
  if (factor < 1) throw ConfigError("pixel_shuffle factor must be >= 1");
  const Index c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const Index s2 = static_cast<Index>(factor) * factor;
  if (c % s2 != 0) {
    throw ConfigError("pixel_shuffle: " + std::to_string(c) + " channels not divisible by " +
                      std::to_string(s2));
  }
  const Index c_out = c / s2;
  Tensor<Scalar> out({c_out, h * factor, w * factor});
  shuffle_copy(input.value().data.data(), out.data.data(), c_out, h, w, factor, true);
  return make_result<Scalar>(std::move(out), {input},
                             [c_out, h, w, factor](Node<Scalar>& self) {
                               Vec<Scalar> g(self.grad.size());
                               shuffle_copy(self.grad.data(), g.data(), c_out, h, w, factor,
                                            false);
                               self.inputs[0]->accumulate(g);
                             });
}

template <typename Scalar>
Var<Scalar> pixel_unshuffle(const Var<Scalar>& input, int factor) {
  require_rank(input.shape(), 3, "pixel_unshuffle input");
  if (factor < 1) throw ConfigError("pixel_unshuffle factor must be >= 1");
  const Index c = input.shape()[0], oh = input.shape()[1], ow = input.shape()[2];
  if (oh % factor != 0 || ow % factor != 0) {
    throw ConfigError("pixel_unshuffle: spatial size " + to_string(input.shape()) +
                      " not divisible by " + std::to_string(factor));
  }
  const Index h = oh / factor, w = ow / factor;
  Tensor<Scalar> out({c * factor * factor, h, w});
  shuffle_copy(input.value().data.data(), out.data.data(), c, h, w, factor, false);
  return make_result<Scalar>(std::move(out), {input}, [c, h, w, factor](Node<Scalar>& self) {
    Vec<Scalar> g(self.grad.size());
    shuffle_copy(self.grad.data(), g.data(), c, h, w, factor, true);
    self.inputs[0]->accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& input, Scalar slope) {
  Tensor<Scalar> out(input.shape(), input.value().data.unaryExpr([slope](Scalar v) {
    return v >= Scalar(0) ? v : slope * v;
  }));
  return make_result<Scalar>(std::move(out), {input}, [slope](Node<Scalar>& self) {
    const Vec<Scalar>& x = self.inputs[0]->value.data;
    self.inputs[0]->accumulate(
        (x.array() >= Scalar(0)).select(self.grad.array(), slope * self.grad.array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_rank(a.shape(), 3, "concat_channels");
  require_rank(b.shape(), 3, "concat_channels");
  if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2]) {
    throw ConfigError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  }
  const Index na = a.size(), nb = b.size();
  Vec<Scalar> data(na + nb);
  data.head(na) = a.value().data;
  data.tail(nb) = b.value().data;
  Tensor<Scalar> out({a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]}, std::move(data));
  return make_result<Scalar>(std::move(out), {a, b}, [na, nb](Node<Scalar>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.head(na));
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.tail(nb));
  });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& input, Index begin, Index count) {
  require_rank(input.shape(), 3, "slice_channels");
  const Index c = input.shape()[0];
  if (begin < 0 || count < 0 || begin + count > c) {
    throw ConfigError("slice_channels: range [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") outside " + std::to_string(c) +
                      " channels");
  }
  const Index plane = input.shape()[1] * input.shape()[2];
  Tensor<Scalar> out({count, input.shape()[1], input.shape()[2]},
                     input.value().data.segment(begin * plane, count * plane));
  return make_result<Scalar>(std::move(out), {input}, [begin, plane](Node<Scalar>& self) {
    Node<Scalar>& x = *self.inputs[0];
    x.grad_buffer().segment(begin * plane, self.grad.size()) += self.grad;
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().data + b.value().data);
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.value().data - b.value().data);
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().data.cwiseProduct(b.value().data));
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    Node<Scalar>& x = *self.inputs[0];
    Node<Scalar>& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value.data));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value.data));
  });
}

template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, Scalar a, Scalar b) {
  Tensor<Scalar> out(x.shape(), (a * x.value().data.array() + b).matrix());
  return make_result<Scalar>(std::move(out), {x}, [a](Node<Scalar>& self) {
    self.inputs[0]->accumulate(a * self.grad);
  });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().data.cwiseAbs());
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    const Vec<Scalar>& v = self.inputs[0]->value.data;
    self.inputs[0]->accumulate(
        self.grad.cwiseProduct(v.unaryExpr([](Scalar t) {
          return t > Scalar(0) ? Scalar(1) : (t < Scalar(0) ? Scalar(-1) : Scalar(0));
        })));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out({1}, Vec<Scalar>::Constant(1, x.value().data.sum()));
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    Node<Scalar>& in = *self.inputs[0];
    in.grad_buffer().array() += self.grad[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index n = x.size();
  if (n == 0) throw UsageError("mean of an empty tensor");
  Tensor<Scalar> out({1}, Vec<Scalar>::Constant(1, x.value().data.sum() / Scalar(n)));
  return make_result<Scalar>(std::move(out), {x}, [n](Node<Scalar>& self) {
    Node<Scalar>& in = *self.inputs[0];
    in.grad_buffer().array() += self.grad[0] / Scalar(n);
  });
}

#define SNERV_INSTANTIATE(S)                                                                   \
  template Var<S> conv2d<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, int);            \
  template Var<S> conv_transpose2d<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, int);  \
  template Var<S> pixel_shuffle<S>(const Var<S>&, int);                                        \
  template Var<S> pixel_unshuffle<S>(const Var<S>&, int);                                      \
  template Var<S> leaky_relu<S>(const Var<S>&, S);                                             \
  template Var<S> concat_channels<S>(const Var<S>&, const Var<S>&);                            \
  template Var<S> slice_channels<S>(const Var<S>&, Index, Index);                              \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                        \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                        \
  template Var<S> mul<S>(const Var<S>&, const Var<S>&);                                        \
  template Var<S> affine<S>(const Var<S>&, S, S);                                              \
  template Var<S> abs<S>(const Var<S>&);                                                       \
  template Var<S> sum<S>(const Var<S>&);                                                       \
  template Var<S> mean<S>(const Var<S>&);

SNERV_INSTANTIATE(float)
SNERV_INSTANTIATE(double)
SNERV_INSTANTIATE(long double)
#undef SNERV_INSTANTIATE

}  // namespace snerv
