#include "stivae/metrics.hpp"

#include "stivae/error.hpp"

#include <cmath>
#include <limits>

namespace stivae::metrics {

Tensor correlation_matrix(const Tensor& truth, const Tensor& estimate, std::size_t* degenerate) {
  if (truth.rank() != 2 || estimate.rank() != 2 || truth.rows() != estimate.rows()) {
    throw DimensionError("correlation needs matrices with equal row counts, got " + shape_string(truth) + " and " +
                         shape_string(estimate));
  }
  if (truth.rows() < 2) throw DataError("correlation needs at least two rows");
  require_finite(truth, "true components");
  require_finite(estimate, "estimated components");

  auto centered = [](const Tensor& t) {
    Eigen::MatrixXd m = t.to_eigen();
    m.rowwise() -= m.colwise().mean();
    return m;
  };
  const Eigen::MatrixXd a = centered(truth), b = centered(estimate);
  const Eigen::VectorXd na = a.colwise().norm(), nb = b.colwise().norm();
  const Eigen::MatrixXd cross = a.transpose() * b;
  Tensor omega(truth.cols(), estimate.cols());
  std::size_t bad = 0;
  for (Eigen::Index j = 0; j < na.size(); ++j) bad += na(j) == 0.0;
  for (Eigen::Index j = 0; j < nb.size(); ++j) bad += nb(j) == 0.0;
  for (std::size_t i = 0; i < truth.cols(); ++i) {
    for (std::size_t j = 0; j < estimate.cols(); ++j) {
      const double den = na(i) * nb(j);
      omega(i, j) = den > 0 ? std::clamp(cross(i, j) / den, -1.0, 1.0) : 0.0;
    }
  }
  if (degenerate) *degenerate = bad;
  return omega;
}

std::vector<std::size_t> max_weight_assignment(const Tensor& weight) {
  const std::size_t n = weight.rows();
  if (weight.rank() != 2 || weight.cols() != n) throw DimensionError("assignment needs a square matrix, got " + shape_string(weight));
  // Shortest augmenting path with potentials on cost = -weight (1-based).
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

double mcc(const Tensor& omega) {
  if (omega.rank() != 2 || omega.rows() != omega.cols() || omega.rows() == 0) {
    throw DimensionError("MCC needs a non-empty square correlation matrix, got " + shape_string(omega));
  }
  Tensor abs_omega = omega;
  for (double& v : abs_omega.data()) v = std::abs(v);
  const auto cols = max_weight_assignment(abs_omega);
  double total = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) total += abs_omega(i, cols[i]);
  return total / static_cast<double>(cols.size());
}

double mcc(const Tensor& truth, const Tensor& estimate) { return mcc(correlation_matrix(truth, estimate)); }

namespace {

void same_length(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw DimensionError("empty input");
}

void same_shape(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError("shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace

double mse(std::span<const double> x, std::span<const double> xhat) {
  same_length(x.size(), xhat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - xhat[i]) * (x[i] - xhat[i]);
  return s / static_cast<double>(x.size());
}

double mae(std::span<const double> x, std::span<const double> xhat) {
  same_length(x.size(), xhat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - xhat[i]);
  return s / static_cast<double>(x.size());
}

std::vector<double> column_mse(const Tensor& x, const Tensor& xhat) {
  same_shape(x, xhat);
  std::vector<double> out;
  for (std::size_t j = 0; j < x.cols(); ++j) out.push_back(mse(x.column(j), xhat.column(j)));
  return out;
}

std::vector<double> column_mae(const Tensor& x, const Tensor& xhat) {
  same_shape(x, xhat);
  std::vector<double> out;
  for (std::size_t j = 0; j < x.cols(); ++j) out.push_back(mae(x.column(j), xhat.column(j)));
  return out;
}

namespace {

void check_sds(std::span<const double> sds, std::size_t s) {
  if (sds.size() != s) throw DimensionError("need one training sd per variable");
  for (double v : sds) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError("training sds must be positive and finite");
  }
}

}  // namespace

double wmse(const Tensor& x, const Tensor& xhat, std::span<const double> train_sds) {
  same_shape(x, xhat);
  check_sds(train_sds, x.cols());
  const auto m = column_mse(x, xhat);
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] / (train_sds[i] * train_sds[i]);
  return s / static_cast<double>(m.size());
}

double wmae(const Tensor& x, const Tensor& xhat, std::span<const double> train_sds) {
  same_shape(x, xhat);
  check_sds(train_sds, x.cols());
  const auto m = column_mae(x, xhat);
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] / train_sds[i];
  return s / static_cast<double>(m.size());
}

std::vector<double> column_sd(const Tensor& x) {
  if (x.rows() < 2) throw DataError("sd needs at least two rows");
  std::vector<double> out;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const auto c = x.column(j);
    double m = 0.0;
    for (double v : c) m += v;
    m /= static_cast<double>(c.size());
    double ss = 0.0;
    for (double v : c) ss += (v - m) * (v - m);
    out.push_back(std::sqrt(ss / static_cast<double>(c.size() - 1)));
  }
  return out;
}

double linear_unmixing_mcc(const Tensor& truth, const Tensor& observed) {
  if (truth.rows() != observed.rows()) throw DimensionError("row counts differ");
  Eigen::MatrixXd x = observed.to_eigen();
  x.rowwise() -= x.colwise().mean();
  // Whitening via the covariance eigendecomposition; near-null directions dropped.
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double top = eig.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    if (eig.eigenvalues()(i) > 1e-12 * top) keep.push_back(i);
  }
  Eigen::MatrixXd w(x.cols(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    w.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(keep[k]) / std::sqrt(eig.eigenvalues()(keep[k]));
  }
  const Eigen::MatrixXd white = x * w;  // orthogonal columns, so OLS is a projection
  Eigen::MatrixXd z = truth.to_eigen();
  z.rowwise() -= z.colwise().mean();
  const Eigen::MatrixXd coef = (white.transpose() * white).ldlt().solve(white.transpose() * z);
  return mcc(truth, Tensor::from_eigen(white * coef));
}

}  // namespace stivae::metrics
