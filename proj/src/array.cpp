#include "pimm/array.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "pimm/error.hpp"

namespace pimm {

Array::Array(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("Array dimensions must be positive, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("Array dimensions must be positive, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (data_.size() != rows * cols) {
    throw ShapeError("Array data size " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  check_finite("Array construction");
}

Array Array::row(std::initializer_list<double> values) {
  return Array(1, values.size(), std::vector<double>(values));
}

Array Array::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(n, 1, std::move(values));
}

Array Array::scalar(double value) {
  return Array(1, 1, std::vector<double>{value});
}

Array Array::full(std::size_t rows, std::size_t cols, double value) {
  return Array(rows, cols, std::vector<double>(rows * cols, value));
}

void Array::check_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + " produced a non-finite value");
    }
  }
}

std::string shape_string(const Array& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace pimm
