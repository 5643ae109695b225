#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stivae {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

/// Dense row-major array of doubles. Rank 1 or 2 in practice; rank-1 tensors
/// behave as a single row for matrix operations. Storage is aligned to Eigen's
/// vector width so kernel results do not depend on where a buffer lands.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
  std::vector<double> column(std::size_t c) const;

  MatrixMap map() { return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  ConstMatrixMap map() const {
    return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
  Eigen::MatrixXd to_eigen() const { return map(); }

  bool all_finite() const;
  void fill(double v);

  /// Rows at the given indices, in order.
  Tensor gather_rows(std::span<const std::size_t> idx) const;
  /// Columns [begin, end).
  Tensor slice_cols(std::size_t begin, std::size_t end) const;
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// [a | b] column concatenation; row counts must agree.
Tensor hconcat(const Tensor& a, const Tensor& b);
/// Throws NumericError naming `what` if any entry is non-finite.
void require_finite(const Tensor& t, const std::string& what);
std::string shape_string(const Tensor& t);

}  // namespace stivae
