#include "rotla/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rotla {

namespace {
std::int64_t product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    check(d > 0, "tensor extents must be positive, got shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check(product(shape_) == static_cast<std::int64_t>(data_.size()),
        "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_to_string(shape_));
}


Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::int64_t Tensor::dim(std::int64_t i) const {
  check(i >= 0 && i < rank(), "dim index " + std::to_string(i) + " out of range for shape " + shape_str());
  return shape_[static_cast<std::size_t>(i)];
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  check(product(shape) == size(), "reshape from " + shape_str() + " to " + shape_to_string(shape) + " changes element count");
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

ComplexPair::ComplexPair(Tensor real, Tensor imag) : re(std::move(real)), im(std::move(imag)) {
  check(re.same_shape(im), "complex pair parts differ in shape: " + re.shape_str() + " vs " + im.shape_str());
}

ComplexPair ComplexPair::zeros(std::vector<std::int64_t> shape) {
  return ComplexPair(Tensor(shape), Tensor(shape));
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "max_abs_diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.at(i)));
  return m;
}

void contract_fail(const std::string& message) { throw ContractError(message); }

void check(bool cond, const std::string& message) {
  if (!cond) contract_fail(message);
}

}  // namespace rotla
