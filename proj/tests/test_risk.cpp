#include <doctest.h>

#include <cmath>

#include <Eigen/LU>

#include "auxshift/estimators.hpp"
#include "auxshift/problem.hpp"
#include "auxshift/risk.hpp"
#include "auxshift/rng.hpp"
#include "auxshift/verify.hpp"

using namespace auxshift;

namespace {

/// The exact (x, z)-coordinate truth when T = m and C* is invertible.
LinearPredictor exact_predictor(const ProblemSetting& s) {
  LinearPredictor p;
  const Eigen::MatrixXd c_inv_t = s.c_star.transpose().inverse();
  p.theta_z = c_inv_t * s.theta_u;
  p.theta_x = s.theta_x_star() - s.b_star.transpose() * s.a_star.transpose() * p.theta_z;
  return p;
}

}  // namespace

TEST_CASE("analytic_risk: the exact predictor attains sigma^2") {
  ProblemSetting s = make_problem_setting(Dims{5, 2, 3, 3}, 1, 2.0);
  s.sigma_sq = 0.37;
  const RiskReport r = analytic_risk(exact_predictor(s), s, Origin::Id);
  CHECK(r.risk == doctest::Approx(0.37).epsilon(1e-10));
  CHECK(r.excess <= 1e-10);
  CHECK(r.x_term <= 1e-12);
  CHECK(r.u_term <= 1e-12);
}

TEST_CASE("analytic_risk: a perfect x-only fit attains sigma_u^2 + sigma^2") {
  ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 2, 2.0);
  s.sigma_sq = 0.2;
  LinearPredictor p;
  p.theta_x = s.theta_x_star();
  p.theta_z = Eigen::VectorXd::Zero(3);
  const double sigma_u_sq = oracle_moments(s, Origin::Id).sigma_u_sq;
  const RiskReport r = analytic_risk(p, s, Origin::Id);
  CHECK(r.risk == doctest::Approx(sigma_u_sq + 0.2).epsilon(1e-10));
  CHECK(r.excess <= 1e-10);
}

TEST_CASE("analytic_risk: decomposition identity and nonnegative excess") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 2}, 10 + rep, 2.5);
    s.sigma_sq = std::exp(rng.uniform(-3.0, 1.0));
    randomize_ood_shift(s, 100 + rep, 0.2, 5.0, 1.0);
    LinearPredictor p;
    p.theta_x = rng.normal_vector(4);
    p.theta_z = rng.normal_vector(2);
    for (Origin origin : {Origin::Id, Origin::Ood}) {
      const RiskReport r = analytic_risk(p, s, origin);
      CHECK(std::abs(r.risk - (r.x_term + r.u_term + r.noise_term)) <= 1e-10);
      CHECK(r.excess >= -1e-10);
    }
  }
}

TEST_CASE("analytic_risk: fitted baselines never beat the x-only Bayes floor") {
  for (int rep = 0; rep < 20; ++rep) {
    ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 4}, 200 + rep, 2.0);
    s.sigma_sq = 0.3;
    const Dataset d = sample_dataset(s, 30, Origin::Id, true, false, 300 + rep);
    const RiskReport r = analytic_risk(fit_baseline(d), s, Origin::Id);
    const double floor = oracle_moments(s, Origin::Id).sigma_u_sq + s.sigma_sq;
    CHECK(r.risk >= floor - 1e-10);
  }
}

TEST_CASE("analytic_risk: excess invariant to adding a zero z channel") {
  ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 3}, 4, 2.0);
  Rng rng(5);
  LinearPredictor x_only;
  x_only.theta_x = rng.normal_vector(4);
  x_only.theta_z = Eigen::VectorXd::Zero(3);
  LinearPredictor no_z = x_only;
  no_z.theta_z.resize(0);
  const RiskReport a = analytic_risk(x_only, s, Origin::Id);
  const RiskReport b = analytic_risk(no_z, s, Origin::Id);
  CHECK(a.excess == doctest::Approx(b.excess).epsilon(1e-12));
}

TEST_CASE("analytic_risk: invariant under (Q, Q^-T) feature reparameterization") {
  const ProblemSetting s = make_problem_setting(Dims{6, 3, 2, 4}, 6, 2.0);
  Rng rng(7);
  FeatureModel m;
  m.b_hat = s.b_star;
  m.theta_w_hat = rng.normal_vector(3);
  const RiskReport ref = analytic_risk(m, s, Origin::Id);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd q = rng.normal_matrix(3, 3);
    FeatureModel reparam;
    reparam.b_hat = q * m.b_hat;
    reparam.theta_w_hat = q.transpose().inverse() * m.theta_w_hat;
    const RiskReport r = analytic_risk(reparam, s, Origin::Id);
    CHECK(r.risk == doctest::Approx(ref.risk).epsilon(1e-8));
  }
}

TEST_CASE("analytic_risk handles intercepts and nonzero x means exactly") {
  ProblemSetting s = make_problem_setting(Dims{3, 2, 2, 2}, 8, 2.0);
  Eigen::VectorXd mean(3);
  mean << 0.7, -0.3, 0.2;
  s.p_x = DistributionSpec::gaussian(mean, Eigen::MatrixXd::Identity(3, 3));
  Rng rng(9);
  LinearPredictor p;
  p.theta_x = rng.normal_vector(3);
  p.theta_z = rng.normal_vector(2);
  p.intercept = 0.8;
  const RiskReport analytic = analytic_risk(p, s, Origin::Id);
  const RiskReport mc = monte_carlo_risk(p, s, Origin::Id, 400000, 10);
  CHECK(std::abs(analytic.risk - mc.risk) <= 4.0 * *mc.mc_std_err);
}

TEST_CASE("monte_carlo_risk: exact predictor with zero noise has zero risk") {
  ProblemSetting s = make_problem_setting(Dims{4, 2, 3, 3}, 11, 2.0);
  s.sigma_sq = 0.0;
  const RiskReport r = monte_carlo_risk(exact_predictor(s), s, Origin::Id, 1000, 12);
  CHECK(r.risk <= 1e-12);
}

TEST_CASE("monte_carlo_risk: deterministic in the seed, sensitive otherwise") {
  const ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 3}, 13, 2.0);
  LinearPredictor p;
  p.theta_x = Eigen::VectorXd::Ones(4);
  p.theta_z = Eigen::VectorXd::Zero(3);
  const RiskReport a = monte_carlo_risk(p, s, Origin::Id, 5000, 14);
  const RiskReport b = monte_carlo_risk(p, s, Origin::Id, 5000, 14);
  CHECK(a.risk == b.risk);
  CHECK(*a.mc_std_err == *b.mc_std_err);
  const RiskReport c = monte_carlo_risk(p, s, Origin::Id, 5000, 15);
  CHECK(a.risk != c.risk);
  CHECK_THROWS_AS(monte_carlo_risk(p, s, Origin::Id, 50, 14), std::invalid_argument);
}

TEST_CASE("monte_carlo agrees with analytic across random predictors") {
  Rng rng(16);
  for (int rep = 0; rep < 20; ++rep) {
    ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 2}, 400 + rep, 2.0);
    s.sigma_sq = std::exp(rng.uniform(-4.0, 0.0));
    randomize_ood_shift(s, 500 + rep, 0.3, 3.0, 0.5);
    const Origin origin = rep % 2 == 0 ? Origin::Id : Origin::Ood;
    LinearPredictor p;
    p.theta_x = rng.normal_vector(4);
    p.theta_z = rng.normal_vector(2);
    const RiskReport analytic = analytic_risk(p, s, origin);
    const RiskReport mc = monte_carlo_risk(p, s, origin, 200000, 600 + rep);
    CHECK(std::abs(analytic.risk - mc.risk) <= 4.0 * *mc.mc_std_err);
  }
}

TEST_CASE("monte_carlo_risk: Example 1 ordering flips OOD at R = 10") {
  const ProblemSetting s = example1_setting(10.0);
  double total_in = 0.0, total_bs = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    const Dataset d = sample_dataset(s, 20, Origin::Id, true, false, 700 + t);
    total_in += monte_carlo_risk(fit_aux_inputs(d), s, Origin::Ood, 4000, 900 + t).risk;
    total_bs += monte_carlo_risk(fit_baseline(d), s, Origin::Ood, 4000, 900 + t).risk;
  }
  CHECK(total_in / trials > total_bs / trials);
}

TEST_CASE("bayes_risk: closed forms per predictor class") {
  SUBCASE("theta_u = 0 collapses both classes to sigma^2") {
    ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 2}, 17, 2.0);
    s.theta_u.setZero();
    s.sigma_sq = 0.5;
    CHECK(bayes_risk(s, Origin::Id, PredictorClass::XOnly) == doctest::Approx(0.5));
    CHECK(bayes_risk(s, Origin::Id, PredictorClass::XAndZ) == doctest::Approx(0.5));
  }
  SUBCASE("Example 1 x-only floors: sigma^2 + 1/4 ID, sigma^2 + 1/3 OOD") {
    for (double R : {0.5, 1.0, 30.0}) {
      const ProblemSetting s = example1_setting(R, 0.1);
      CHECK(bayes_risk(s, Origin::Id, PredictorClass::XOnly) ==
            doctest::Approx(0.1 + 0.25).epsilon(1e-12));
      CHECK(bayes_risk(s, Origin::Ood, PredictorClass::XOnly) ==
            doctest::Approx(0.1 + 1.0 / 3.0).epsilon(1e-12));
    }
  }
  SUBCASE("x-and-z class is rejected when T > m") {
    const ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 3}, 18, 2.0);
    CHECK_THROWS_AS(bayes_risk(s, Origin::Id, PredictorClass::XAndZ),
                    std::invalid_argument);
  }
}

TEST_CASE("excess_risk_ratio: fixed points and sentinels") {
  RiskReport a, b;
  a.origin = b.origin = Origin::Ood;
  a.excess = b.excess = 0.4;
  CHECK(excess_risk_ratio(a, b) == doctest::Approx(1.0));
  a.excess = 0.0;
  CHECK(excess_risk_ratio(a, b) == 0.0);
  b.excess = 1e-15;
  CHECK(std::isinf(excess_risk_ratio(a, b)));
  b.origin = Origin::Id;
  CHECK_THROWS_AS(excess_risk_ratio(a, b), std::invalid_argument);
}
