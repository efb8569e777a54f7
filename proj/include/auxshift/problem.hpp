#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>

namespace auxshift {

/// Dimensions of the generative model: inputs x in R^d, latent features
/// w = B*x in R^k, latent noise u in R^m, auxiliary outputs z in R^T.
struct Dims {
  int d = 1;
  int k = 1;
  int m = 1;
  int T = 1;

  /// Throws std::invalid_argument unless 1 <= k <= d, T >= k, T >= m.
  void validate() const;
};

enum class DistFamily { Gaussian, UniformBox, UniformBall };
enum class NoiseFamily { Gaussian, Uniform };
enum class Origin { Id, Ood };

std::string to_string(DistFamily f);
std::string to_string(Origin o);

/// A sampling distribution with closed-form first and second moments.
/// Exactly one of {covariance, half_width, radius} is meaningful,
/// depending on the family.
struct DistributionSpec {
  DistFamily family = DistFamily::Gaussian;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;   // Gaussian: d x d, symmetric positive definite
  Eigen::VectorXd half_width;   // UniformBox: per-coordinate half-widths > 0
  double radius = 0.0;          // UniformBall: > 0

  static DistributionSpec gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  static DistributionSpec uniform_box(Eigen::VectorXd mean, Eigen::VectorXd half_width);
  static DistributionSpec uniform_ball(Eigen::VectorXd mean, double radius, int dim);

  int dim() const { return static_cast<int>(mean.size()); }

  /// Centered covariance matrix in closed form.
  Eigen::MatrixXd covariance_matrix() const;

  /// Uncentered second moment E[x x^T] = Cov + mean mean^T.
  Eigen::MatrixXd second_moment() const;

  /// Checks positive-definite second moments and positive shape
  /// parameters; throws std::invalid_argument on violation.
  void validate() const;
};

/// Ground-truth linear multi-task model:
///   w = B* x,  z = A* w + C* u,  y = <theta_w, w> + <theta_u, u> + eps,
/// with x ~ p_x, u ~ p_u (zero mean), eps mean zero with variance sigma_sq.
struct ProblemSetting {
  Dims dims;
  Eigen::MatrixXd a_star;  // T x k, rank k
  Eigen::MatrixXd b_star;  // k x d, rank k
  Eigen::MatrixXd c_star;  // T x m, rank m
  Eigen::VectorXd theta_w; // k
  Eigen::VectorXd theta_u; // m
  double sigma_sq = 1.0;
  NoiseFamily noise_family = NoiseFamily::Gaussian;
  DistributionSpec p_x, p_u;          // in-distribution
  DistributionSpec p_x_ood, p_u_ood;  // out-of-distribution

  const DistributionSpec& x_dist(Origin o) const {
    return o == Origin::Id ? p_x : p_x_ood;
  }
  const DistributionSpec& u_dist(Origin o) const {
    return o == Origin::Id ? p_u : p_u_ood;
  }

  /// Ambient-coordinate truth: theta_x = B*^T theta_w.
  Eigen::VectorXd theta_x_star() const { return b_star.transpose() * theta_w; }

  /// Full invariant check (shapes, ranks, zero-mean u, sigma_sq >= 0).
  void validate() const;
};

/// Rows sampled i.i.d. from one origin of a ProblemSetting. Y and U
/// are present only when requested at sampling time.
struct Dataset {
  Eigen::MatrixXd x;                 // n x d
  Eigen::MatrixXd z;                 // n x T
  std::optional<Eigen::VectorXd> y;  // n
  std::optional<Eigen::MatrixXd> u;  // n x m (oracle latents)
  Origin origin = Origin::Id;

  Eigen::Index rows() const { return x.rows(); }
};

/// Random full-rank instance respecting every ProblemSetting invariant.
/// Matrices are drawn from a Gaussian ensemble and singular-value-clamped
/// to [1/conditioning, conditioning]; theta_w, theta_u have unit-scale
/// entries; ID and OOD distributions default to standard Gaussians.
/// Deterministic in (dims, seed, conditioning).
ProblemSetting make_problem_setting(const Dims& dims, std::uint64_t seed,
                                    double conditioning = 1.0);

/// The adversarial construction where auxiliary inputs hurt OOD:
/// d = k = 1, m = T = 2, B* = 1, A* = [1, 0]^T, C* = I, theta_w = 1,
/// theta_u = (1, 0); x ~ Uniform[-1,1] both origins; u ~ unit ball ID,
/// u' ~ Uniform[-1,1] x Uniform[-R,R] OOD.
ProblemSetting example1_setting(double R, double sigma_sq = 1.0);

/// One draw from the generative model. Z and Y satisfy the generative
/// identities exactly given the sampled latents; U is always drawn (it
/// enters Z) but stored only when with_latents is set, so X, Z, Y do
/// not depend on the flags.
Dataset sample_dataset(const ProblemSetting& setting, Eigen::Index n, Origin origin,
                       bool with_labels, bool with_latents, std::uint64_t seed);

struct Moments {
  Eigen::MatrixXd x_second_moment;  // E[x x^T], uncentered
  Eigen::MatrixXd u_covariance;     // Cov(u) = E[u u^T] (u is zero mean)
  double sigma_u_sq = 0.0;          // theta_u^T Cov(u) theta_u
};

/// Closed-form moments for the designated origin.
Moments oracle_moments(const ProblemSetting& setting, Origin origin);

}  // namespace auxshift
