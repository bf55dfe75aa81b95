#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mtsd {

// Dense row-major array of 64-bit floats. Scalars use shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool is_scalar() const { return numel() == 1; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // 2-D accessors; shape must have rank 2.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool all_finite() const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace mtsd
