#pragma once

#include "vseg/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace vseg {

struct NmfOptions {
  int max_iters = 200;
  double tol = 1e-4;  ///< stop when the relative objective change falls below this
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct NmfResult {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix F;  ///< M x N footprints
  Matrix A;  ///< N x K activity profiles
  std::vector<Scalar> objective;  ///< 0.5 ||P - FA||_F^2, initial value first
  int iterations = 0;
};

/// Uniform draws in [0, 1) from the top 53 bits, identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Lee-Seung multiplicative updates for min ||P - FA||_F with F, A >= 0.
/// The random start is scaled so that mean(FA) = mean(P).
template <typename Derived>
NmfResult<typename Derived::Scalar> nmf(const Eigen::MatrixBase<Derived>& P, int rank, const NmfOptions& options = {}) {
  using Scalar = typename Derived::Scalar;
  using Matrix = typename NmfResult<Scalar>::Matrix;
  const Eigen::Index m = P.rows();
  const Eigen::Index k = P.cols();
  if (rank < 1 || rank > std::min(m, k)) {
    throw NumericError("nmf rank " + std::to_string(rank) + " outside [1, min(M, K)]");
  }
  if ((P.array() < Scalar(0)).any()) throw NumericError("nmf input has negative entries");

  NmfResult<Scalar> r;
  std::mt19937_64 rng(options.seed);
  r.F = Matrix::NullaryExpr(m, rank, [&] { return static_cast<Scalar>(unit_uniform(rng)); });
  r.A = Matrix::NullaryExpr(rank, k, [&] { return static_cast<Scalar>(unit_uniform(rng)); });
  const Scalar target = P.mean();
  const Scalar start = (r.F * r.A).mean();
  if (target <= Scalar(0) || start <= Scalar(0)) {
    r.F.setZero();
    r.A.setZero();
    r.objective.push_back(Scalar(0.5) * P.squaredNorm());
    return r;
  }
  const Scalar scale = std::sqrt(target / start);
  r.F *= scale;
  r.A *= scale;

  const Scalar eps = std::numeric_limits<Scalar>::epsilon() * std::numeric_limits<Scalar>::epsilon();
  auto objective = [&] { return Scalar(0.5) * (P - r.F * r.A).squaredNorm(); };
  r.objective.push_back(objective());
  for (int it = 0; it < options.max_iters; ++it) {
    const Matrix ftf = r.F.transpose() * r.F;
    r.A.array() *= (r.F.transpose() * P).array() / ((ftf * r.A).array() + eps);
    const Matrix aat = r.A * r.A.transpose();
    r.F.array() *= (P * r.A.transpose()).array() / ((r.F * aat).array() + eps);
    r.objective.push_back(objective());
    r.iterations = it + 1;
    const Scalar prev = r.objective[r.objective.size() - 2];
    const Scalar cur = r.objective.back();
    if (prev <= Scalar(0) || std::abs(prev - cur) / prev < options.tol) break;
  }
  return r;
}

/// ||P - FA||_F / ||P||_F, or 0 for P = 0.
template <typename DP, typename DF, typename DA>
double relative_error(const Eigen::MatrixBase<DP>& P, const Eigen::MatrixBase<DF>& F, const Eigen::MatrixBase<DA>& A) {
  const double norm = static_cast<double>(P.norm());
  if (norm == 0.0) return 0.0;
  return static_cast<double>((P - F * A).norm()) / norm;
}

/// Smallest rank in [1, max_rank] whose relative error is below
/// `max_error`, else max_rank (capped at min(M, K)).
template <typename Derived>
int select_rank(const Eigen::MatrixBase<Derived>& P, int max_rank = 3, double max_error = 0.25,
                const NmfOptions& options = {}) {
  const int cap = static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(max_rank), P.rows(), P.cols()}));
  if (cap <= 1 || P.squaredNorm() == 0) return 1;
  for (int n = 1; n <= cap; ++n) {
    const auto fit = nmf(P, n, options);
    if (relative_error(P, fit.F, fit.A) < max_error) return n;
  }
  return cap;
}

}  // namespace vseg
