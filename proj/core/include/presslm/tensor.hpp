#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "presslm/rng.hpp"

namespace presslm {

/// Global numeric precision. f32 is the default running mode; f64 is required
/// for finite-difference gradient checks, where float rounding would drown
/// the h^2 truncation error.
enum class Precision { f32, f64 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

/// Scoped precision switch for tests.
class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionGuard() { set_precision(saved_); }
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision saved_;
};

/// Dense row-major tensor of real scalars, rank >= 1, no zero-size dims.
///
/// Storage is double; in f32 mode every construction and op result is rounded
/// through IEEE float, so default-mode values carry 32-bit precision while
/// f64 mode keeps full doubles. Gradients accumulate in double in both modes.
class Tensor {
 public:
  Tensor() = default;  // empty sentinel; any math use is an error

  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor gaussian(std::vector<std::size_t> shape, double stddev, CounterRng& rng);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Rank-2 accessors; throw ShapeError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Value of a size-1 tensor.
  double item() const;

  void fill(double v);

  /// Rounds every element through float when the global mode is f32.
  Tensor& quantize();

  std::string shape_str() const;
  static std::string shape_str(const std::vector<std::size_t>& s);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);

/// Exact element equality; the comparison used by determinism and
/// frozen-weight audits.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Rounds a raw double through float when the global mode is f32.
double quantized(double v);

}  // namespace presslm
