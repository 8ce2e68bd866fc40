#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rotla {

/// Dense row-major tensor of doubles. Shapes are immutable after
/// construction; all arithmetic lives in kernels.hpp / ops.hpp.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor scalar(double value);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  // rank-2 accessor
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  // rank-3 accessor
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  /// Same data, new shape (element count must match).
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

/// Complex tensors are kept as explicit (re, im) pairs of equal shape.
struct ComplexPair {
  Tensor re;
  Tensor im;

  ComplexPair() = default;
  ComplexPair(Tensor real, Tensor imag);
  static ComplexPair zeros(std::vector<std::int64_t> shape);
};

std::string shape_to_string(const std::vector<std::int64_t>& shape);

/// max_i |a_i - b_i| over two same-shape tensors.
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

/// Thrown by shape/contract violations. Message names the offending shapes.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& message) : std::runtime_error(message) {}
};

[[noreturn]] void contract_fail(const std::string& message);

void check(bool cond, const std::string& message);

}  // namespace rotla
