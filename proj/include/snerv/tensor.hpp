// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <type_traits>
#include <vector>

#include "snerv/errors.hpp"

namespace snerv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Reduction type: at least double, wider for long double.
template <typename Scalar>
using Accum = std::conditional_t<(sizeof(Scalar) > sizeof(double)), Scalar, double>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape);

/// Dense row-major n-d array. Feature maps use the [C, H, W] layout, so each
/// channel is a contiguous H*W plane.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Vec<Scalar> data;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)), data(Vec<Scalar>::Zero(numel(shape))) {
    check_dims();
  }

  Tensor(Shape s, Vec<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    check_dims();
    if (data.size() != numel(shape)) {
      throw ConfigError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + to_string(shape));
    }
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor constant(Shape s, Scalar value) {
    Tensor t(std::move(s));
    t.data.setConstant(value);
    return t;
  }

  Index size() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }

  // [C, H, W] accessors.
  Index channels() const { return shape.at(0); }
  Index height() const { return shape.at(1); }
  Index width() const { return shape.at(2); }

  Scalar& operator()(Index c, Index h, Index w) {
    return data[(c * shape[1] + h) * shape[2] + w];
  }
  Scalar operator()(Index c, Index h, Index w) const {
    return data[(c * shape[1] + h) * shape[2] + w];
  }

  /// One channel as an H x W row-major matrix view.
  Eigen::Map<RowMat<Scalar>> plane(Index c) {
    return {data.data() + c * shape[1] * shape[2], shape[1], shape[2]};
  }
  Eigen::Map<const RowMat<Scalar>> plane(Index c) const {
    return {data.data() + c * shape[1] * shape[2], shape[1], shape[2]};
  }

  /// (H*W) x C column-major view: column c is channel c.
  Eigen::Map<Mat<Scalar>> pixels_by_channel() {
    return {data.data(), shape[1] * shape[2], shape[0]};
  }
  Eigen::Map<const Mat<Scalar>> pixels_by_channel() const {
    return {data.data(), shape[1] * shape[2], shape[0]};
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape, data.template cast<To>());
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

 private:
  void check_dims() const {
    for (Index d : shape) {
      if (d < 0) throw ConfigError("negative tensor dimension in " + to_string(shape));
    }
  }
};

}  // namespace snerv
