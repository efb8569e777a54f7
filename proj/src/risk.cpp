#include "auxshift/risk.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "auxshift/rng.hpp"

namespace auxshift {

namespace {

struct AmbientCoefficients {
  Eigen::VectorXd on_x;  // d
  Eigen::VectorXd on_u;  // m
  double intercept = 0.0;
  PredictorClass cls = PredictorClass::XOnly;
};

/// Rewrites a predictor in (x, u) coordinates via z = A* B* x + C* u.
/// An absent z channel (empty theta_z) counts as all-zero.
AmbientCoefficients ambient(const LinearPredictor& p, const ProblemSetting& s) {
  if (p.theta_z.size() != 0 && p.theta_z.size() != s.dims.T)
    throw std::invalid_argument("analytic_risk: theta_z dimension mismatch");
  AmbientCoefficients c;
  c.on_x = p.theta_x;
  c.on_u = Eigen::VectorXd::Zero(s.dims.m);
  if (p.theta_z.size() != 0) {
    c.on_x += s.b_star.transpose() * (s.a_star.transpose() * p.theta_z);
    c.on_u = s.c_star.transpose() * p.theta_z;
  }
  c.intercept = p.intercept;
  c.cls = p.uses_z() ? PredictorClass::XAndZ : PredictorClass::XOnly;
  return c;
}

AmbientCoefficients ambient(const FeatureModel& p, const ProblemSetting& s) {
  AmbientCoefficients c;
  c.on_x = p.ambient_coefficients();
  c.on_u = Eigen::VectorXd::Zero(s.dims.m);
  c.cls = PredictorClass::XOnly;
  return c;
}

RiskReport analytic_from_coefficients(const AmbientCoefficients& coef,
                                      const ProblemSetting& setting, Origin origin) {
  const Moments mom = oracle_moments(setting, origin);
  const Eigen::VectorXd dx = coef.on_x - setting.theta_x_star();
  const Eigen::VectorXd du = coef.on_u - setting.theta_u;
  const Eigen::VectorXd x_mean = setting.x_dist(origin).mean;

  RiskReport r;
  r.origin = origin;
  r.method = RiskMethod::Analytic;
  r.x_term = dx.dot(mom.x_second_moment * dx) +
             2.0 * coef.intercept * dx.dot(x_mean) + coef.intercept * coef.intercept;
  r.u_term = du.dot(mom.u_covariance * du);
  r.noise_term = setting.sigma_sq;
  r.risk = r.x_term + r.u_term + r.noise_term;
  r.bayes = bayes_risk(setting, origin, coef.cls);
  r.excess = r.risk - r.bayes;
  return r;
}

RiskReport monte_carlo_from_coefficients(const AmbientCoefficients& coef,
                                         const ProblemSetting& setting, Origin origin,
                                         Eigen::Index n_samples, std::uint64_t seed) {
  if (n_samples < 100)
    throw std::invalid_argument("monte_carlo_risk: n_samples must be at least 100");
  // Reuse the generative sampler so the oracle shares no code with the
  // analytic moment path.
  const Dataset data = sample_dataset(setting, n_samples, origin,
                                      /*with_labels=*/true, /*with_latents=*/true, seed);
  const Eigen::VectorXd pred =
      data.x * coef.on_x + *data.u * coef.on_u +
      Eigen::VectorXd::Constant(n_samples, coef.intercept);
  const Eigen::ArrayXd sq_err = (pred - *data.y).array().square();

  RiskReport r;
  r.origin = origin;
  r.method = RiskMethod::MonteCarlo;
  r.risk = sq_err.mean();
  const double var = (sq_err - r.risk).square().sum() / static_cast<double>(n_samples - 1);
  r.mc_std_err = std::sqrt(var / static_cast<double>(n_samples));
  r.bayes = bayes_risk(setting, origin, coef.cls);
  r.excess = r.risk - r.bayes;
  // The decomposition terms are analytic-only; report the noise floor.
  r.noise_term = setting.sigma_sq;
  r.x_term = std::numeric_limits<double>::quiet_NaN();
  r.u_term = std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace

std::string to_string(RiskMethod m) {
  return m == RiskMethod::Analytic ? "analytic" : "monte-carlo";
}

RiskReport analytic_risk(const LinearPredictor& predictor, const ProblemSetting& setting,
                         Origin origin) {
  return analytic_from_coefficients(ambient(predictor, setting), setting, origin);
}

RiskReport analytic_risk(const FeatureModel& predictor, const ProblemSetting& setting,
                         Origin origin) {
  return analytic_from_coefficients(ambient(predictor, setting), setting, origin);
}

RiskReport monte_carlo_risk(const LinearPredictor& predictor, const ProblemSetting& setting,
                            Origin origin, Eigen::Index n_samples, std::uint64_t seed) {
  return monte_carlo_from_coefficients(ambient(predictor, setting), setting, origin, n_samples,
                                       seed);
}

RiskReport monte_carlo_risk(const FeatureModel& predictor, const ProblemSetting& setting,
                            Origin origin, Eigen::Index n_samples, std::uint64_t seed) {
  return monte_carlo_from_coefficients(ambient(predictor, setting), setting, origin, n_samples,
                                       seed);
}

double bayes_risk(const ProblemSetting& setting, Origin origin, PredictorClass predictor_class) {
  if (predictor_class == PredictorClass::XOnly)
    return setting.sigma_sq + oracle_moments(setting, origin).sigma_u_sq;
  if (setting.dims.T > setting.dims.m)
    throw std::invalid_argument(
        "bayes_risk: x-and-z class requires T = m (not identifiable in closed form here)");
  // T = m with full-rank (invertible) C*: u is an exact linear function
  // of (x, z), so only the label noise remains.
  return setting.sigma_sq;
}

double excess_risk_ratio(const RiskReport& a, const RiskReport& b) {
  if (a.origin != b.origin)
    throw std::invalid_argument("excess_risk_ratio: reports have different origins");
  if (b.excess <= 1e-14) return std::numeric_limits<double>::infinity();
  return a.excess / b.excess;
}

}  // namespace auxshift
