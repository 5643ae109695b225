#pragma once

#include "stivae/tensor.hpp"

#include <span>
#include <vector>

namespace stivae::metrics {

/// Pearson correlations between columns of `truth` (rows of the result) and
/// columns of `estimate` (columns of the result). A column with zero sample
/// variance correlates as 0 and is counted in `degenerate`.
Tensor correlation_matrix(const Tensor& truth, const Tensor& estimate, std::size_t* degenerate = nullptr);

/// Column assigned to each row that maximizes the summed weight (Hungarian).
std::vector<std::size_t> max_weight_assignment(const Tensor& weight);

/// Mean absolute correlation under the best row/column matching.
double mcc(const Tensor& omega);
/// mcc(correlation_matrix(truth, estimate)).
double mcc(const Tensor& truth, const Tensor& estimate);

double mse(std::span<const double> x, std::span<const double> xhat);
double mae(std::span<const double> x, std::span<const double> xhat);

/// Per-column errors of n x S matrices.
std::vector<double> column_mse(const Tensor& x, const Tensor& xhat);
std::vector<double> column_mae(const Tensor& x, const Tensor& xhat);

/// (1/S) sum MSE_i / sd_i^2 and (1/S) sum MAE_i / sd_i.
double wmse(const Tensor& x, const Tensor& xhat, std::span<const double> train_sds);
double wmae(const Tensor& x, const Tensor& xhat, std::span<const double> train_sds);

/// Sample standard deviation of every column (n - 1 denominator).
std::vector<double> column_sd(const Tensor& x);

/// Best MCC reachable by any linear unmixing: each true component is
/// regressed by least squares on the whitened observations and the fitted
/// values are scored.
double linear_unmixing_mcc(const Tensor& truth, const Tensor& observed);

}  // namespace stivae::metrics
