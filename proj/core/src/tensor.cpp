#include "presslm/tensor.hpp"

#include <atomic>
#include <cstring>
#include <sstream>

#include "presslm/errors.hpp"

namespace presslm {

namespace {
std::atomic<Precision> g_precision{Precision::f32};

std::size_t checked_size(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor rank must be >= 1");
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("zero-size tensor rejected: shape " + Tensor::shape_str(shape));
    }
    n *= d;
  }
  return n;
}
}  // namespace

Precision precision() noexcept { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) noexcept { g_precision.store(p, std::memory_order_relaxed); }

double quantized(double v) {
  if (precision() == Precision::f32) {
    return static_cast<double>(static_cast<float>(v));
  }
  return v;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  const std::size_t n = checked_size(shape_);
  if (n != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
  quantize();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::gaussian(std::vector<std::size_t> shape, double stddev, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) {
    v = stddev * rng.gaussian();
  }
  return t.quantize();
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str());
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str());
  }
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
  }
  return data_[0];
}

void Tensor::fill(double v) {
  const double q = quantized(v);
  for (double& x : data_) {
    x = q;
  }
}

Tensor& Tensor::quantize() {
  if (precision() == Precision::f32) {
    for (double& v : data_) {
      v = static_cast<double>(static_cast<float>(v));
    }
  }
  return *this;
}

std::string Tensor::shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace presslm
