#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "multicause/errors.hpp"

namespace multicause {

/// Singular values of X (descending). Tall matrices go through a QR
/// factorization first so only the d x d triangular factor is decomposed.
inline std::vector<double> singular_values(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd small;
  if (x.rows() > 4 * x.cols()) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    small = qr.matrixQR().topRows(x.cols()).triangularView<Eigen::Upper>();
  } else {
    small = x;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(small);
  const auto& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

struct CollinearityReport {
  bool collinear = false;
  std::vector<double> singular_values;  // of the column-normalized design
  double ratio = 0.0;                   // smallest / largest
  std::vector<std::string> columns;     // names implicated in the near-null direction
};

/// Detects (near-)collinear columns: each column is scaled to unit Euclidean
/// norm, then the smallest singular value is compared against tol * largest.
/// Implicated columns are read off the trailing right singular vector.
inline CollinearityReport check_collinearity(const Eigen::MatrixXd& x,
                                             std::span<const std::string> names,
                                             double tol = 1e-8) {
  CollinearityReport rep;
  Eigen::MatrixXd scaled = x;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm > 0.0) scaled.col(j) /= norm;
  }
  Eigen::MatrixXd small;
  if (scaled.rows() > 4 * scaled.cols()) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
    small = qr.matrixQR().topRows(scaled.cols()).triangularView<Eigen::Upper>();
  } else {
    small = scaled;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(small, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  rep.singular_values.assign(sv.data(), sv.data() + sv.size());
  const double largest = sv(0);
  const double smallest = sv(sv.size() - 1);
  rep.ratio = largest > 0.0 ? smallest / largest : 0.0;
  if (largest == 0.0 || smallest <= tol * largest) {
    rep.collinear = true;
    const Eigen::VectorXd null_dir = svd.matrixV().col(sv.size() - 1);
    for (Eigen::Index j = 0; j < null_dir.size(); ++j) {
      if (std::fabs(null_dir(j)) > 0.1) {
        const auto idx = static_cast<std::size_t>(j);
        rep.columns.push_back(idx < names.size() ? names[idx]
                                                 : "col" + std::to_string(j));
      }
    }
  }
  return rep;
}

/// Ordinary least squares via normal equations; callers are expected to have
/// run a rank check on the design first.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

/// Weighted least squares with per-row weights w >= 0.
inline Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& x,
                                              const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& w) {
  Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  Eigen::VectorXd xtwy = x.transpose() * (w.asDiagonal() * y);
  return xtwx.ldlt().solve(xtwy);
}

/// Streaming accumulator for X'X and X'y; used by bootstrap loops so a
/// resampled design never has to be materialized.
class NormalEquations {
 public:
  explicit NormalEquations(int dim)
      : xtx_(Eigen::MatrixXd::Zero(dim, dim)), xty_(Eigen::VectorXd::Zero(dim)) {}

  void reset() {
    xtx_.setZero();
    xty_.setZero();
  }

  void add(std::span<const double> row, double y) {
    const auto d = static_cast<Eigen::Index>(row.size());
    for (Eigen::Index i = 0; i < d; ++i) {
      const double xi = row[static_cast<std::size_t>(i)];
      xty_(i) += xi * y;
      for (Eigen::Index j = i; j < d; ++j) {
        xtx_(i, j) += xi * row[static_cast<std::size_t>(j)];
      }
    }
  }

  Eigen::VectorXd solve() const {
    Eigen::MatrixXd full = xtx_.selfadjointView<Eigen::Upper>();
    return full.ldlt().solve(xty_);
  }

 private:
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
};

}  // namespace multicause
