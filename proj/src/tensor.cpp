#include "stivae/tensor.hpp"

#include "stivae/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace stivae {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : Tensor({rows, cols}, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " + std::to_string(product(shape_)));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Tensor t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.map() = m;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  if (shape_.empty()) return 0;
  throw DimensionError("rows() on tensor of rank " + std::to_string(shape_.size()));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 0;
  throw DimensionError("cols() on tensor of rank " + std::to_string(shape_.size()));
}

std::vector<double> Tensor::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = (*this)(r, c);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::gather_rows(std::span<const std::size_t> idx) const {
  const std::size_t c = cols();
  Tensor out(idx.size(), c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor Tensor::slice_cols(std::size_t begin, std::size_t end) const {
  if (begin > end || end > cols()) throw DimensionError("column slice out of range");
  Tensor out(rows(), end - begin);
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = (*this)(r, c);
  }
  return out;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw DimensionError("row slice out of range");
  const std::size_t c = cols();
  std::vector<double> data(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                           data_.begin() + static_cast<std::ptrdiff_t>(end * c));
  return Tensor({end - begin, c}, std::move(data));
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("hconcat row mismatch: " + shape_string(a) + " vs " + shape_string(b));
  }
  Tensor out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < t.shape().size(); ++i) os << (i ? "x" : "") << t.shape()[i];
  os << ')';
  return os.str();
}

}  // namespace stivae
