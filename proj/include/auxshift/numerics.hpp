#pragma once

#include <Eigen/Core>

namespace auxshift {

/// Minimum-norm least-squares solution of inputs * coefficients ~ targets.
struct LstSqSolution {
  Eigen::MatrixXd coefficients;     // p x q
  Eigen::Index effective_rank = 0;  // singular values above the cutoff
  double residual_norm = 0.0;       // Frobenius norm of the residual
};

/// SVD-based minimum-norm solve. Singular values at or below
/// max(n, p) * eps * sigma_max are treated as zero, so rank deficiency
/// degrades to the minimum-norm solution instead of failing.
LstSqSolution least_squares(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

struct ReducedRankFit {
  Eigen::MatrixXd a_hat;  // q x k
  Eigen::MatrixXd b_hat;  // k x p
};

/// Classical reduced-rank regression: whiten the inputs by the inverse
/// square root of their empirical second moment, truncate the SVD of the
/// full least-squares map at the requested rank in whitened coordinates,
/// and map back. a_hat * b_hat minimizes ||X C^T - Z||_F over rank-k C.
/// Throws on rank-deficient inputs or rank > min(p, q).
ReducedRankFit reduced_rank_regression(const Eigen::MatrixXd& inputs,
                                       const Eigen::MatrixXd& targets, Eigen::Index rank);

/// Canonical angles between the rowspaces of two k x d matrices, sorted
/// ascending, each in [0, pi/2]. Throws if either matrix is rank-deficient.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& rows_a, const Eigen::MatrixXd& rows_b);

/// Smallest eigenvalue by a symmetric eigensolve. The input must be
/// symmetric within 1e-10 relative to its magnitude.
double min_eigenvalue_sym(const Eigen::MatrixXd& m);

/// k-th largest singular value of an n x k matrix (n >= k); equals
/// min over unit v of ||M v||_2.
double min_singular_value(const Eigen::MatrixXd& m);

}  // namespace auxshift
