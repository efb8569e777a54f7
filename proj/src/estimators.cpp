#include "auxshift/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "auxshift/numerics.hpp"

namespace auxshift {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Solves design -> y, optionally with an appended constant column whose
/// coefficient is returned separately.
std::pair<Eigen::VectorXd, double> solve_with_optional_intercept(const Eigen::MatrixXd& design,
                                                                 const Eigen::VectorXd& y,
                                                                 bool fit_intercept) {
  if (!fit_intercept) {
    return {least_squares(design, y).coefficients.col(0), 0.0};
  }
  Eigen::MatrixXd augmented(design.rows(), design.cols() + 1);
  augmented << design, Eigen::VectorXd::Ones(design.rows());
  const Eigen::VectorXd beta = least_squares(augmented, y).coefficients.col(0);
  return {beta.head(design.cols()), beta[design.cols()]};
}

}  // namespace

LinearPredictor fit_baseline(const Dataset& labeled, const FitOptions& options) {
  require(labeled.y.has_value(), "fit_baseline: labeled data has no labels");
  auto [theta, intercept] =
      solve_with_optional_intercept(labeled.x, *labeled.y, options.fit_intercept);
  LinearPredictor model;
  model.theta_x = std::move(theta);
  model.theta_z = Eigen::VectorXd::Zero(labeled.z.cols());
  model.intercept = intercept;
  return model;
}

LinearPredictor fit_aux_inputs(const Dataset& labeled, const FitOptions& options) {
  require(labeled.y.has_value(), "fit_aux_inputs: labeled data has no labels");
  require(labeled.z.cols() > 0, "fit_aux_inputs: labeled data has no auxiliary columns");
  const Eigen::Index d = labeled.x.cols();
  Eigen::MatrixXd design(labeled.rows(), d + labeled.z.cols());
  design << labeled.x, labeled.z;
  auto [theta, intercept] = solve_with_optional_intercept(design, *labeled.y, options.fit_intercept);
  LinearPredictor model;
  model.theta_x = theta.head(d);
  model.theta_z = theta.tail(labeled.z.cols());
  model.intercept = intercept;
  return model;
}

Eigen::MatrixXd pretrain_aux_outputs(std::span<const Dataset> unlabeled_pool, Eigen::Index k) {
  require(!unlabeled_pool.empty(), "pretrain_aux_outputs: empty pool");
  Eigen::Index total = 0;
  for (const Dataset& d : unlabeled_pool) total += d.rows();
  const Eigen::Index dx = unlabeled_pool.front().x.cols();
  const Eigen::Index dz = unlabeled_pool.front().z.cols();

  Eigen::MatrixXd x(total, dx);
  Eigen::MatrixXd z(total, dz);
  Eigen::Index at = 0;
  for (const Dataset& d : unlabeled_pool) {
    require(d.x.cols() == dx && d.z.cols() == dz, "pretrain_aux_outputs: inconsistent shapes");
    x.middleRows(at, d.rows()) = d.x;
    z.middleRows(at, d.rows()) = d.z;
    at += d.rows();
  }
  return reduced_rank_regression(x, z, k).b_hat;
}

FeatureModel transfer_aux_outputs(const Eigen::MatrixXd& b_hat, const Dataset& labeled) {
  require(labeled.y.has_value(), "transfer_aux_outputs: labeled data has no labels");
  FeatureModel model;
  model.b_hat = b_hat;
  const Eigen::MatrixXd w = labeled.x * b_hat.transpose();
  model.theta_w_hat = least_squares(w, *labeled.y).coefficients.col(0);
  return model;
}

InputOnFeatures fit_input_on_features(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                                      PseudolabelDesign design) {
  require(labeled.y.has_value(), "fit_input_on_features: labeled data has no labels");
  const Eigen::MatrixXd first = design == PseudolabelDesign::Features
                                    ? Eigen::MatrixXd(labeled.x * b_hat.transpose())
                                    : labeled.x;
  Eigen::MatrixXd joint(labeled.rows(), first.cols() + labeled.z.cols());
  joint << first, labeled.z;
  const Eigen::VectorXd coef = least_squares(joint, *labeled.y).coefficients.col(0);
  InputOnFeatures fit;
  fit.gamma_w = coef.head(first.cols());
  fit.gamma_z = coef.tail(labeled.z.cols());
  return fit;
}

FeatureModel fit_in_n_out(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                          const Dataset& id_unlabeled, const InNOutOptions& options) {
  require(labeled.y.has_value(), "fit_in_n_out: labeled data has no labels");
  require(options.lambda >= 0.0 && options.lambda <= 1.0,
          "fit_in_n_out: lambda must be in [0, 1]");
  const bool needs_pool = options.lambda > 0.0;
  require(!needs_pool || id_unlabeled.rows() >= 1,
          "fit_in_n_out: empty unlabeled pool with lambda > 0");

  const InputOnFeatures gamma = fit_input_on_features(b_hat, labeled, options.design);
  const Eigen::MatrixXd w_labeled = labeled.x * b_hat.transpose();

  // Each risk term is normalized by its own sample count before the
  // lambda mix, realized as row weights of a stacked least squares.
  const double n = static_cast<double>(labeled.rows());
  const double wt_labeled = std::sqrt((1.0 - options.lambda) / n);

  Eigen::MatrixXd design;
  Eigen::VectorXd target;
  if (needs_pool) {
    const Eigen::MatrixXd w_pool = id_unlabeled.x * b_hat.transpose();
    const Eigen::MatrixXd& pl_inputs = options.design == PseudolabelDesign::Features
                                           ? w_pool
                                           : id_unlabeled.x;
    const Eigen::VectorXd pseudolabels =
        pl_inputs * gamma.gamma_w + id_unlabeled.z * gamma.gamma_z;
    const double wt_pool = std::sqrt(options.lambda / static_cast<double>(id_unlabeled.rows()));
    design.resize(labeled.rows() + id_unlabeled.rows(), b_hat.rows());
    design << wt_labeled * w_labeled, wt_pool * w_pool;
    target.resize(design.rows());
    target << wt_labeled * *labeled.y, wt_pool * pseudolabels;
  } else {
    design = wt_labeled * w_labeled;
    target = wt_labeled * *labeled.y;
  }

  FeatureModel model;
  model.b_hat = b_hat;
  model.theta_w_hat = least_squares(design, target).coefficients.col(0);
  return model;
}

LambdaSelection select_in_n_out_lambda(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                                       const Dataset& id_unlabeled, const Dataset& validation,
                                       std::span<const double> grid,
                                       PseudolabelDesign design) {
  require(validation.y.has_value(), "select_in_n_out_lambda: validation set has no labels");
  static const std::vector<double> default_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                   0.6, 0.7, 0.8, 0.9, 1.0};
  const std::span<const double> lambdas =
      grid.empty() ? std::span<const double>(default_grid) : grid;

  LambdaSelection best;
  double best_risk = std::numeric_limits<double>::infinity();
  for (double lambda : lambdas) {
    FeatureModel candidate = fit_in_n_out(b_hat, labeled, id_unlabeled, {lambda, design});
    const Eigen::VectorXd pred =
        validation.x * candidate.ambient_coefficients();
    const double risk =
        (pred - *validation.y).squaredNorm() / static_cast<double>(validation.rows());
    best.validation_risks.push_back(risk);
    if (risk < best_risk) {
      best_risk = risk;
      best.lambda = lambda;
      best.model = std::move(candidate);
    }
  }
  return best;
}

Eigen::VectorXd in_n_out_population_head(const InputOnFeatures& gamma,
                                         const Eigen::MatrixXd& a_star) {
  require(a_star.rows() == gamma.gamma_z.size() && a_star.cols() == gamma.gamma_w.size(),
          "in_n_out_population_head: shape mismatch");
  return gamma.gamma_w + a_star.transpose() * gamma.gamma_z;
}

Eigen::VectorXd in_n_out_oracle_head(const Eigen::MatrixXd& w, const Eigen::MatrixXd& u,
                                     const Eigen::VectorXd& y) {
  require(w.rows() == u.rows() && w.rows() == y.size(), "in_n_out_oracle_head: row mismatch");
  require(w.rows() >= w.cols() + u.cols(), "in_n_out_oracle_head: requires n >= k + m");
  Eigen::MatrixXd joint(w.rows(), w.cols() + u.cols());
  joint << w, u;
  const LstSqSolution sol = least_squares(joint, y);
  if (sol.effective_rank < joint.cols())
    throw std::invalid_argument("in_n_out_oracle_head: [W; U] is rank deficient");
  return sol.coefficients.col(0).head(w.cols());
}

}  // namespace auxshift
