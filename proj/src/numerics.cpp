#include "auxshift/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace auxshift {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double rank_cutoff(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * kEps * sigma_max;
}

}  // namespace

LstSqSolution least_squares(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  if (inputs.rows() < 1) throw std::invalid_argument("least_squares: empty inputs");
  if (inputs.rows() != targets.rows())
    throw std::invalid_argument("least_squares: row count mismatch");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(inputs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rank_cutoff(inputs.rows(), inputs.cols(), s[0]) : 0.0;

  LstSqSolution sol;
  sol.coefficients.setZero(inputs.cols(), targets.cols());
  // Minimum-norm solution: invert only singular values above the cutoff.
  const Eigen::MatrixXd uty = svd.matrixU().transpose() * targets;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) {
      sol.coefficients.noalias() += svd.matrixV().col(i) * (uty.row(i) / s[i]);
      ++sol.effective_rank;
    }
  }
  sol.residual_norm = (inputs * sol.coefficients - targets).norm();
  return sol;
}

ReducedRankFit reduced_rank_regression(const Eigen::MatrixXd& inputs,
                                       const Eigen::MatrixXd& targets, Eigen::Index rank) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index p = inputs.cols();
  const Eigen::Index q = targets.cols();
  if (n != targets.rows()) throw std::invalid_argument("reduced_rank_regression: row mismatch");
  if (rank < 1 || rank > std::min(p, q))
    throw std::invalid_argument("reduced_rank_regression: rank must be in [1, min(p, q)]");

  // Whiten by the inverse symmetric square root of the empirical second
  // moment; the rank-k truncation is then an SVD truncation.
  const Eigen::MatrixXd sxx = inputs.transpose() * inputs / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sxx);
  const Eigen::VectorXd& evals = es.eigenvalues();
  const double eval_cutoff = static_cast<double>(std::max(n, p)) * kEps *
                             std::max(evals.maxCoeff(), 0.0);
  if (evals.minCoeff() <= eval_cutoff)
    throw std::invalid_argument("reduced_rank_regression: inputs are rank deficient");
  const Eigen::MatrixXd inv_sqrt =
      es.eigenvectors() * evals.cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();

  // Full least-squares map in whitened coordinates, then truncate.
  const Eigen::MatrixXd c_full =
      targets.transpose() * (inputs * inv_sqrt) / static_cast<double>(n);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(c_full, Eigen::ComputeThinU | Eigen::ComputeThinV);

  ReducedRankFit fit;
  fit.a_hat = svd.matrixU().leftCols(rank) *
              svd.singularValues().head(rank).asDiagonal();
  fit.b_hat = svd.matrixV().leftCols(rank).transpose() * inv_sqrt;
  return fit;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& rows_a, const Eigen::MatrixXd& rows_b) {
  if (rows_a.rows() != rows_b.rows() || rows_a.cols() != rows_b.cols())
    throw std::invalid_argument("principal_angles: shape mismatch");
  const Eigen::Index k = rows_a.rows();

  auto orthonormal_basis = [&](const Eigen::MatrixXd& rows) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(rows.transpose(), Eigen::ComputeThinU);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = rank_cutoff(rows.cols(), rows.rows(), s[0]);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] <= cutoff)
        throw std::invalid_argument("principal_angles: rank-deficient input");
    return Eigen::MatrixXd(svd.matrixU().leftCols(k));
  };
  const Eigen::MatrixXd qa = orthonormal_basis(rows_a);
  const Eigen::MatrixXd qb = orthonormal_basis(rows_b);

  // Cosines from the canonical-correlation SVD; acos alone cannot
  // resolve angles below ~sqrt(eps), so small angles are recomputed
  // from the projection residual (sine-based form).
  const Eigen::MatrixXd cross = qa.transpose() * qb;
  Eigen::BDCSVD<Eigen::MatrixXd> svd_cos(cross);
  const Eigen::VectorXd cosines = svd_cos.singularValues();  // descending
  Eigen::BDCSVD<Eigen::MatrixXd> svd_sin(qb - qa * cross);
  const Eigen::VectorXd sines = svd_sin.singularValues();  // descending

  Eigen::VectorXd angles(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines[i], -1.0, 1.0);
    // cosines[i] descending pairs with sines[k-1-i] ascending.
    const double s = std::clamp(sines[k - 1 - i], 0.0, 1.0);
    angles[i] = c * c > 0.5 ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

double min_eigenvalue_sym(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("min_eigenvalue_sym: not square");
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1.0);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("min_eigenvalue_sym: input not symmetric within tolerance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double min_singular_value(const Eigen::MatrixXd& m) {
  if (m.rows() < m.cols())
    throw std::invalid_argument("min_singular_value: requires rows >= cols");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[m.cols() - 1];
}

}  // namespace auxshift
