// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snerv/autodiff.hpp"

namespace snerv {

/// floor((in + 2*pad - k) / stride) + 1; throws ConfigError when not positive.
Index conv_output_size(Index in, int kernel, int stride, int pad);

/// (in - 1) * stride - 2*pad + k; throws ConfigError when not positive.
Index conv_transpose_output_size(Index in, int kernel, int stride, int pad);

/// 2D cross-correlation. input [Cin,H,W], weight [Cout,Cin,k,k], bias [Cout]
/// (bias may be an undefined Var).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   int stride, int pad);

/// Adjoint of conv2d in the input argument. input [Cin,H,W],
/// weight [Cin,Cout,k,k], bias [Cout].
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& input, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, int stride, int pad);

/// [C*s*s, H, W] -> [C, H*s, W*s], out(c, h*s+a, w*s+b) = in(c*s*s + a*s + b, h, w).
template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& input, int factor);

/// Inverse rearrangement of pixel_shuffle.
template <typename Scalar>
Var<Scalar> pixel_unshuffle(const Var<Scalar>& input, int factor);

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& input, Scalar slope = Scalar(0.1));

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& input, Index begin, Index count);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);

/// a * x + b, elementwise.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, Scalar a, Scalar b);

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);

}  // namespace snerv
