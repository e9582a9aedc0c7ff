#pragma once

#include <cstddef>
#include <vector>

namespace fbdsde {

// Dense row-major matrix of doubles. Rows index paths, columns index grid
// nodes or steps throughout the library.
class Array2D {
 public:
  Array2D() : rows_(0), cols_(0) {}
  Array2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

}  // namespace fbdsde
