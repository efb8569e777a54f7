#pragma once

#include <span>

#include <Eigen/Core>

#include "auxshift/problem.hpp"

namespace auxshift {

/// Linear predictor in ambient coordinates:
/// y_hat = <theta_x, x> + <theta_z, z> + intercept.
struct LinearPredictor {
  Eigen::VectorXd theta_x;  // d
  Eigen::VectorXd theta_z;  // T; all-zero for z-ignoring models
  double intercept = 0.0;

  double predict(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
    return theta_x.dot(x) + theta_z.dot(z) + intercept;
  }
  bool uses_z() const { return theta_z.size() > 0 && !theta_z.isZero(0.0); }
};

/// Rank-k feature map plus head; predicts from x only:
/// y_hat = <theta_w_hat, b_hat * x>.
struct FeatureModel {
  Eigen::MatrixXd b_hat;       // k x d
  Eigen::VectorXd theta_w_hat; // k

  double predict(const Eigen::VectorXd& x) const { return theta_w_hat.dot(b_hat * x); }

  /// Equivalent ambient coefficient on x.
  Eigen::VectorXd ambient_coefficients() const { return b_hat.transpose() * theta_w_hat; }
};

/// Joint least-squares fit of y on the concatenated design [W; Z].
struct InputOnFeatures {
  Eigen::VectorXd gamma_w;  // k
  Eigen::VectorXd gamma_z;  // T
};

struct FitOptions {
  /// Augment the design with a constant column and report the fitted
  /// intercept. Off by default: the generative model is intercept-free
  /// and the closed-form identities are exact only without it.
  bool fit_intercept = false;
};

/// Which design the pseudolabeling stage of In-N-Out is fit on.
enum class PseudolabelDesign {
  Features,   // (W, Z), the analyzable variant
  RawInputs,  // (X, Z), the variant used in the deep experiments
};

struct InNOutOptions {
  double lambda = 1.0;  // weight on the pseudolabeled term, in [0, 1]
  PseudolabelDesign design = PseudolabelDesign::Features;
};

/// Ordinary least squares from X to Y, ignoring z entirely.
LinearPredictor fit_baseline(const Dataset& labeled, const FitOptions& options = {});

/// Joint least squares of Y on [X; Z].
LinearPredictor fit_aux_inputs(const Dataset& labeled, const FitOptions& options = {});

/// Pre-training step: pools every dataset's rows and solves the rank-k
/// regression from x to z; returns the k x d row factor (feature map).
Eigen::MatrixXd pretrain_aux_outputs(std::span<const Dataset> unlabeled_pool, Eigen::Index k);

/// Transfer step: least squares from W = X b_hat^T to Y.
FeatureModel transfer_aux_outputs(const Eigen::MatrixXd& b_hat, const Dataset& labeled);

/// Aux-inputs stage of In-N-Out on the chosen design. For the Features
/// design the inputs are (W, Z); for RawInputs, gamma_w holds the x
/// coefficients instead and has dimension d.
InputOnFeatures fit_input_on_features(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                                      PseudolabelDesign design = PseudolabelDesign::Features);

/// Full In-N-Out fine-tuning: fit the aux-inputs stage on labeled data,
/// pseudolabel the ID unlabeled pool, and fit the head minimizing
/// (1 - lambda) * mean labeled squared loss + lambda * mean pseudolabeled
/// squared loss over W-features. The feature map stays frozen.
FeatureModel fit_in_n_out(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                          const Dataset& id_unlabeled, const InNOutOptions& options = {});

/// Fits one In-N-Out model per lambda on the grid and keeps the one
/// with the smallest mean squared error on the labeled ID validation
/// set. An empty grid means {0.0, 0.1, ..., 1.0}.
struct LambdaSelection {
  double lambda = 0.0;
  FeatureModel model;
  std::vector<double> validation_risks;  // one per grid point
};
LambdaSelection select_in_n_out_lambda(const Eigen::MatrixXd& b_hat, const Dataset& labeled,
                                       const Dataset& id_unlabeled, const Dataset& validation,
                                       std::span<const double> grid = {},
                                       PseudolabelDesign design = PseudolabelDesign::Features);

/// Infinite-unlabeled-data limit of self-training on pseudolabels from
/// gamma: head = gamma_w + A*^T gamma_z. Usable only when A* is known.
Eigen::VectorXd in_n_out_population_head(const InputOnFeatures& gamma,
                                         const Eigen::MatrixXd& a_star);

/// Closed form of the In-N-Out head from oracle latents: the first k
/// coordinates of the joint least-squares solution of [W; U] -> Y.
/// Throws if [W; U] is column-rank deficient.
Eigen::VectorXd in_n_out_oracle_head(const Eigen::MatrixXd& w, const Eigen::MatrixXd& u,
                                     const Eigen::VectorXd& y);

}  // namespace auxshift
