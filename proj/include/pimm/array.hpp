#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace pimm {

/// Dense row-major matrix of 64-bit floats. Every quantity in the library
/// (activations, parameters, labels, gradients) is one of these; vectors are
/// stored as single-column or single-row matrices and scalars as 1x1.
///
/// Construction validates that all values are finite; NaN/Inf anywhere in a
/// computation therefore surfaces as a NumericError at the node that
/// produced it.
class Array {
 public:
  Array() = default;

  /// Zero-filled rows x cols array.
  Array(std::size_t rows, std::size_t cols);

  /// Takes ownership of `data` (size must equal rows*cols, values finite).
  Array(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// 1xN row from an initializer list.
  static Array row(std::initializer_list<double> values);

  /// Nx1 column from a vector.
  static Array column(std::vector<double> values);

  /// 1x1 scalar.
  static Array scalar(double value);

  /// rows x cols with every entry set to `value`.
  static Array full(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  /// Shape as a dimension list, row-major order.
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Array& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// Throws NumericError if any entry is NaN or infinite. `what` names the
  /// producing operation in the message.
  void check_finite(const char* what) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// "rows x cols" for error messages.
std::string shape_string(const Array& a);

}  // namespace pimm
