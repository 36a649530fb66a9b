// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace stdnet {

// Dense row-major tensor of doubles. Double precision everywhere: the test
// suite checks gradients against central finite differences, which needs the
// headroom.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  int64_t size() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[size_t(i)]; }
  double operator[](int64_t i) const { return data_[size_t(i)]; }

  // 2-D accessors (rows x cols).
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }
  double& at(int r, int c) { return data_[size_t(r) * cols() + c]; }
  double at(int r, int c) const { return data_[size_t(r) * cols() + c]; }

  // 3-D accessor ([c][h][w]).
  double& at3(int c, int h, int w) {
    return data_[(size_t(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at3(int c, int h, int w) const {
    return data_[(size_t(c) * shape_[1] + h) * shape_[2] + w];
  }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double max_abs() const;

  Tensor reshaped(std::vector<int> shape) const;

  std::string shape_str() const;

  static int64_t numel(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace stdnet
