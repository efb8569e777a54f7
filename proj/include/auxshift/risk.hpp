#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "auxshift/estimators.hpp"
#include "auxshift/problem.hpp"

namespace auxshift {

enum class RiskMethod { Analytic, MonteCarlo };
enum class PredictorClass { XOnly, XAndZ };

std::string to_string(RiskMethod m);

/// Population squared-error risk with its Bayes / excess decomposition.
/// For the analytic method, risk = x_term + u_term + noise_term exactly
/// and excess >= 0 up to roundoff.
struct RiskReport {
  double risk = 0.0;
  double bayes = 0.0;   // Bayes-optimal risk of the predictor's class
  double excess = 0.0;  // risk - bayes
  double x_term = 0.0;
  double u_term = 0.0;
  double noise_term = 0.0;
  Origin origin = Origin::Id;
  RiskMethod method = RiskMethod::Analytic;
  std::optional<double> mc_std_err;
};

/// Exact risk from closed-form second moments. The predictor is
/// rewritten in (x, u) coordinates: coefficient on x is
/// theta_x + B*^T A*^T theta_z, coefficient on u is C*^T theta_z, and
/// the cross term vanishes because u is zero-mean and independent of x.
RiskReport analytic_risk(const LinearPredictor& predictor, const ProblemSetting& setting,
                         Origin origin);
RiskReport analytic_risk(const FeatureModel& predictor, const ProblemSetting& setting,
                         Origin origin);

/// Independent oracle: samples fresh (x, u, eps), forms y and z, and
/// averages the squared error; reports the standard error of the mean.
RiskReport monte_carlo_risk(const LinearPredictor& predictor, const ProblemSetting& setting,
                            Origin origin, Eigen::Index n_samples, std::uint64_t seed);
RiskReport monte_carlo_risk(const FeatureModel& predictor, const ProblemSetting& setting,
                            Origin origin, Eigen::Index n_samples, std::uint64_t seed);

/// Bayes-optimal risk over the given predictor class. XOnly gives
/// sigma_sq + sigma_u'^2 at the origin; XAndZ requires T = m with
/// invertible C* and gives sigma_sq. Throws for XAndZ when T > m.
double bayes_risk(const ProblemSetting& setting, Origin origin, PredictorClass predictor_class);

/// a.excess / b.excess, with an infinity sentinel when the denominator
/// is at most 1e-14. Throws when the reports' origins differ.
double excess_risk_ratio(const RiskReport& a, const RiskReport& b);

}  // namespace auxshift
