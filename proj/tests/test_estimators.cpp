#include <doctest.h>

#include <cmath>

#include <Eigen/LU>
#include <vector>

#include "auxshift/estimators.hpp"
#include "auxshift/numerics.hpp"
#include "auxshift/problem.hpp"
#include "auxshift/risk.hpp"
#include "auxshift/rng.hpp"

using namespace auxshift;

namespace {

ProblemSetting noiseless_setting(const Dims& dims, std::uint64_t seed) {
  ProblemSetting s = make_problem_setting(dims, seed, 2.0);
  s.sigma_sq = 0.0;
  s.theta_u.setZero();
  return s;
}

}  // namespace

TEST_CASE("fit_baseline: exact recovery in the noiseless square case") {
  const ProblemSetting s = noiseless_setting(Dims{4, 2, 2, 3}, 1);
  const Dataset d = sample_dataset(s, 4, Origin::Id, true, false, 2);
  const LinearPredictor model = fit_baseline(d);
  CHECK((model.theta_x - s.theta_x_star()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(model.intercept == 0.0);
}

TEST_CASE("fit_baseline: ignores z by construction") {
  const ProblemSetting s = example1_setting(10.0);
  const Dataset d = sample_dataset(s, 30, Origin::Id, true, false, 3);
  const LinearPredictor model = fit_baseline(d);
  CHECK(model.theta_z == Eigen::VectorXd::Zero(2));
  // Predictions are invariant to arbitrary replacement of the test z.
  Rng rng(4);
  const Eigen::VectorXd x = rng.normal_vector(1);
  CHECK(model.predict(x, rng.normal_vector(2)) == model.predict(x, rng.normal_vector(2)));
}

TEST_CASE("fit_baseline: mean in-distribution excess tracks d sigma^2 / n") {
  const int trials = 200;
  const int n = 100;
  const int d = 5;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    ProblemSetting s = make_problem_setting(Dims{d, 2, 2, 3}, 100 + t, 2.0);
    s.theta_u.setZero();
    s.sigma_sq = 1.0;
    const Dataset data = sample_dataset(s, n, Origin::Id, true, false, 500 + t);
    total += analytic_risk(fit_baseline(data), s, Origin::Id).excess;
  }
  const double expected = static_cast<double>(d) * 1.0 / static_cast<double>(n);
  CHECK(total / trials == doctest::Approx(expected).epsilon(0.25));
}

TEST_CASE("fit_baseline: requires labels") {
  const ProblemSetting s = noiseless_setting(Dims{3, 2, 2, 2}, 5);
  const Dataset d = sample_dataset(s, 10, Origin::Id, false, false, 6);
  CHECK_THROWS_AS(fit_baseline(d), std::invalid_argument);
}

TEST_CASE("fit_aux_inputs: recovers the well-specified (x, z) model when T = m") {
  ProblemSetting s = make_problem_setting(Dims{4, 2, 3, 3}, 7, 2.0);
  s.sigma_sq = 0.0;  // exact linearity; least squares interpolates
  const Dataset d = sample_dataset(s, 5 * (4 + 3), Origin::Id, true, false, 8);
  const LinearPredictor model = fit_aux_inputs(d);

  // Oracle from the inversion z -> u with square invertible C*.
  const Eigen::MatrixXd c_inv_t = s.c_star.transpose().inverse();
  const Eigen::VectorXd theta_z_true = c_inv_t * s.theta_u;
  const Eigen::VectorXd theta_x_true =
      s.theta_x_star() - s.b_star.transpose() * s.a_star.transpose() * theta_z_true;
  CHECK((model.theta_x - theta_x_true).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((model.theta_z - theta_z_true).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fit_aux_inputs: an all-zero z channel falls back to the baseline") {
  const ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 3}, 9, 2.0);
  Dataset d = sample_dataset(s, 60, Origin::Id, true, false, 10);
  d.z.setZero();
  const LinearPredictor aux = fit_aux_inputs(d);
  const LinearPredictor base = fit_baseline(d);
  CHECK((aux.theta_x - base.theta_x).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(aux.theta_z == Eigen::VectorXd::Zero(3));
}

TEST_CASE("fit_aux_inputs: beats the baseline in-distribution on Example 1 data") {
  int wins = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    const ProblemSetting s = example1_setting(1.0);
    const Dataset d = sample_dataset(s, 50, Origin::Id, true, false, 1000 + t);
    const double risk_in = analytic_risk(fit_aux_inputs(d), s, Origin::Id).risk;
    const double risk_bs = analytic_risk(fit_baseline(d), s, Origin::Id).risk;
    if (risk_in < risk_bs) ++wins;
  }
  CHECK(static_cast<double>(wins) / trials >= 0.95);
}

TEST_CASE("fit_aux_inputs: training loss never exceeds the baseline's") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 4}, seed, 2.0);
    const Dataset d = sample_dataset(s, 40, Origin::Id, true, false, seed * 7);
    auto training_loss = [&](const LinearPredictor& m) {
      return (d.x * m.theta_x + d.z * m.theta_z +
              Eigen::VectorXd::Constant(d.rows(), m.intercept) - *d.y)
          .squaredNorm();
    };
    CHECK(training_loss(fit_aux_inputs(d)) <= training_loss(fit_baseline(d)) + 1e-12);
  }
}

TEST_CASE("pretrain_aux_outputs: noiseless auxiliary recovers the rowspace exactly") {
  ProblemSetting s = make_problem_setting(Dims{6, 2, 2, 4}, 14, 2.0);
  s.c_star.setZero();  // z has no latent-noise component
  std::vector<Dataset> pool{sample_dataset(s, 40, Origin::Id, false, false, 15)};
  const Eigen::MatrixXd b_hat = pretrain_aux_outputs(pool, 2);
  CHECK(principal_angles(b_hat, s.b_star).maxCoeff() <= 1e-8);
}

TEST_CASE("pretrain_aux_outputs: large mixed pool aligns with the true rowspace") {
  const ProblemSetting s = make_problem_setting(Dims{10, 3, 2, 4}, 16, 3.0);
  std::vector<Dataset> pool;
  pool.push_back(sample_dataset(s, 50000, Origin::Id, false, false, 17));
  pool.push_back(sample_dataset(s, 50000, Origin::Ood, false, false, 18));
  const Eigen::MatrixXd b_hat = pretrain_aux_outputs(pool, 3);
  CHECK(principal_angles(b_hat, s.b_star).maxCoeff() <= 0.05);
}

TEST_CASE("pretrain_aux_outputs: pooling order does not matter") {
  const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 19, 2.0);
  const Dataset a = sample_dataset(s, 200, Origin::Id, false, false, 20);
  const Dataset b = sample_dataset(s, 200, Origin::Ood, false, false, 21);
  std::vector<Dataset> ab{a, b}, ba{b, a};
  const Eigen::MatrixXd first = pretrain_aux_outputs(ab, 2);
  const Eigen::MatrixXd second = pretrain_aux_outputs(ba, 2);
  CHECK((first - second).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("pretrain_aux_outputs: empty pool is rejected") {
  std::vector<Dataset> empty;
  CHECK_THROWS_AS(pretrain_aux_outputs(empty, 2), std::invalid_argument);
}

TEST_CASE("transfer_aux_outputs: identity features reduce to the baseline") {
  const ProblemSetting s = make_problem_setting(Dims{4, 2, 2, 3}, 22, 2.0);
  const Dataset d = sample_dataset(s, 50, Origin::Id, true, false, 23);
  const FeatureModel feat =
      transfer_aux_outputs(Eigen::MatrixXd::Identity(4, 4), d);
  const LinearPredictor base = fit_baseline(d);
  Rng rng(24);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = rng.normal_vector(4);
    CHECK(feat.predict(x) ==
          doctest::Approx(base.predict(x, Eigen::VectorXd::Zero(3))).epsilon(1e-10));
  }
}

TEST_CASE("transfer_aux_outputs: noiseless well-specified fit has zero risk") {
  const ProblemSetting s = noiseless_setting(Dims{5, 2, 2, 3}, 25);
  const Dataset d = sample_dataset(s, 40, Origin::Id, true, false, 26);
  const FeatureModel model = transfer_aux_outputs(s.b_star, d);
  CHECK(analytic_risk(model, s, Origin::Id).risk <= 1e-10);
}

TEST_CASE("transfer_aux_outputs: head refit absorbs any invertible remixing") {
  const ProblemSetting s = make_problem_setting(Dims{6, 3, 2, 4}, 27, 2.0);
  const Dataset d = sample_dataset(s, 80, Origin::Id, true, false, 28);
  const FeatureModel ref = transfer_aux_outputs(s.b_star, d);
  Rng rng(29);
  for (int i = 0; i < 10; ++i) {
    const Eigen::MatrixXd q = rng.normal_matrix(3, 3);
    const FeatureModel remixed = transfer_aux_outputs(q * s.b_star, d);
    for (int j = 0; j < 5; ++j) {
      const Eigen::VectorXd x = rng.normal_vector(6);
      CHECK(remixed.predict(x) == doctest::Approx(ref.predict(x)).epsilon(1e-8));
    }
  }
}

TEST_CASE("fit_in_n_out: lambda = 0 degenerates to the transfer fit") {
  const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 30, 2.0);
  const Dataset labeled = sample_dataset(s, 40, Origin::Id, true, false, 31);
  const Dataset pool = sample_dataset(s, 100, Origin::Id, false, false, 32);
  const FeatureModel mixed = fit_in_n_out(s.b_star, labeled, pool, InNOutOptions{0.0});
  const FeatureModel transfer = transfer_aux_outputs(s.b_star, labeled);
  CHECK((mixed.theta_w_hat - transfer.theta_w_hat).cwiseAbs().maxCoeff() <= 1e-10);
  // lambda = 0 does not touch the pool at all.
  Dataset no_pool = pool;
  no_pool.x.resize(0, 5);
  no_pool.z.resize(0, 3);
  CHECK_NOTHROW(fit_in_n_out(s.b_star, labeled, no_pool, InNOutOptions{0.0}));
  CHECK_THROWS_AS(fit_in_n_out(s.b_star, labeled, no_pool, InNOutOptions{0.5}),
                  std::invalid_argument);
}

TEST_CASE("fit_in_n_out: lambda = 1 on the labeled rows is plain self-training") {
  const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 33, 2.0);
  const Dataset labeled = sample_dataset(s, 40, Origin::Id, true, false, 34);
  Dataset pool = labeled;  // same X, Z rows as the labeled set
  pool.y.reset();
  const FeatureModel model = fit_in_n_out(s.b_star, labeled, pool, InNOutOptions{1.0});

  const InputOnFeatures gamma = fit_input_on_features(s.b_star, labeled);
  const Eigen::MatrixXd w = labeled.x * s.b_star.transpose();
  const Eigen::VectorXd pseudolabels = w * gamma.gamma_w + labeled.z * gamma.gamma_z;
  const Eigen::VectorXd direct = least_squares(w, pseudolabels).coefficients.col(0);
  CHECK((model.theta_w_hat - direct).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fit_in_n_out: large-pool self-training approaches the population head") {
  ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 35, 2.0);
  s.sigma_sq = 0.01;
  const Dataset labeled = sample_dataset(s, 60, Origin::Id, true, false, 36);
  const Dataset pool = sample_dataset(s, 1000000, Origin::Id, false, false, 37);
  const FeatureModel model = fit_in_n_out(s.b_star, labeled, pool, InNOutOptions{1.0});
  const Eigen::VectorXd population =
      in_n_out_population_head(fit_input_on_features(s.b_star, labeled), s.a_star);
  CHECK((model.theta_w_hat - population).norm() / population.norm() <= 1e-2);
}

TEST_CASE("in_n_out_population_head: degenerate and hand-computed cases") {
  InputOnFeatures gamma;
  gamma.gamma_w = Eigen::VectorXd::Constant(1, 1.0);
  gamma.gamma_z = Eigen::VectorXd::Zero(2);
  const ProblemSetting e1 = example1_setting(1.0);
  CHECK(in_n_out_population_head(gamma, e1.a_star)[0] == 1.0);

  gamma.gamma_z << 2.0, 3.0;  // head = 1 + [1, 0] . (2, 3) = 3
  CHECK(in_n_out_population_head(gamma, e1.a_star)[0] == doctest::Approx(3.0));
}

TEST_CASE("in_n_out_oracle_head: orthogonal latents decouple the solve") {
  Rng rng(38);
  const Eigen::Index n = 12;
  // W lives in coordinates 0..4, U in coordinates 5..7, Y in span(W-coords).
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, 2);
  w.topRows(5) = rng.normal_matrix(5, 2);
  u.bottomRows(5) = rng.normal_matrix(5, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  y.head(5) = rng.normal_vector(5);

  const Eigen::VectorXd joint = in_n_out_oracle_head(w, u, y);
  const Eigen::VectorXd alone = least_squares(w, y).coefficients.col(0);
  CHECK((joint - alone).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("in_n_out_oracle_head: equals the population head on the same sample") {
  for (std::uint64_t seed : {40ULL, 41ULL, 42ULL}) {
    // T > m exercises the rank-deficient (W, Z) design.
    const ProblemSetting s = make_problem_setting(Dims{6, 2, 2, 4}, seed, 2.5);
    const Dataset d = sample_dataset(s, 60, Origin::Id, true, true, seed + 100);
    const Eigen::MatrixXd w = d.x * s.b_star.transpose();
    const Eigen::VectorXd oracle = in_n_out_oracle_head(w, *d.u, *d.y);
    const Eigen::VectorXd population =
        in_n_out_population_head(fit_input_on_features(s.b_star, d), s.a_star);
    CHECK((oracle - population).norm() / population.norm() <= 1e-8);
  }
}

TEST_CASE("in_n_out_oracle_head: square noiseless system interpolates theta_w") {
  const Dims dims{5, 2, 2, 3};
  ProblemSetting s = make_problem_setting(dims, 43, 2.0);
  s.sigma_sq = 0.0;
  const Dataset d = sample_dataset(s, dims.k + dims.m, Origin::Id, true, true, 44);
  const Eigen::MatrixXd w = d.x * s.b_star.transpose();
  const Eigen::VectorXd head = in_n_out_oracle_head(w, *d.u, *d.y);
  CHECK((head - s.theta_w).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("in_n_out_oracle_head: rejects rank-deficient joint designs") {
  Rng rng(45);
  Eigen::MatrixXd w = rng.normal_matrix(10, 2);
  const Eigen::MatrixXd u = w;  // U duplicates W's columns
  const Eigen::VectorXd y = rng.normal_vector(10);
  CHECK_THROWS_AS(in_n_out_oracle_head(w, u, y), std::invalid_argument);
  CHECK_THROWS_AS(in_n_out_oracle_head(rng.normal_matrix(3, 2), rng.normal_matrix(3, 2),
                                       rng.normal_vector(3)),
                  std::invalid_argument);
}

TEST_CASE("feature models and In-N-Out stay invariant under feature remixing") {
  const ProblemSetting s = make_problem_setting(Dims{6, 3, 2, 4}, 46, 2.0);
  const Dataset labeled = sample_dataset(s, 60, Origin::Id, true, false, 47);
  const Dataset pool = sample_dataset(s, 500, Origin::Id, false, false, 48);
  const FeatureModel ref = fit_in_n_out(s.b_star, labeled, pool, InNOutOptions{0.7});
  Rng rng(49);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd q = rng.normal_matrix(3, 3);
    const FeatureModel remixed =
        fit_in_n_out(q * s.b_star, labeled, pool, InNOutOptions{0.7});
    for (int j = 0; j < 5; ++j) {
      const Eigen::VectorXd x = rng.normal_vector(6);
      CHECK(remixed.predict(x) == doctest::Approx(ref.predict(x)).epsilon(1e-8));
    }
  }
}

TEST_CASE("fit_in_n_out: raw-inputs pseudolabel design matches its definition") {
  const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 60, 2.0);
  const Dataset labeled = sample_dataset(s, 40, Origin::Id, true, false, 61);
  Dataset pool = labeled;
  pool.y.reset();
  const FeatureModel model = fit_in_n_out(s.b_star, labeled, pool,
                                          InNOutOptions{1.0, PseudolabelDesign::RawInputs});
  // Step 1 on raw (X, Z), pseudolabels from it, head from W.
  const LinearPredictor aux = fit_aux_inputs(labeled);
  const Eigen::VectorXd pseudolabels = labeled.x * aux.theta_x + labeled.z * aux.theta_z;
  const Eigen::MatrixXd w = labeled.x * s.b_star.transpose();
  const Eigen::VectorXd direct = least_squares(w, pseudolabels).coefficients.col(0);
  CHECK((model.theta_w_hat - direct).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("select_in_n_out_lambda: picks the validation minimizer") {
  ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 2}, 62, 2.0);
  s.sigma_sq = 0.05;
  const Dataset labeled = sample_dataset(s, 30, Origin::Id, true, false, 63);
  const Dataset pool = sample_dataset(s, 2000, Origin::Id, false, false, 64);
  const Dataset validation = sample_dataset(s, 400, Origin::Id, true, false, 65);

  const LambdaSelection sel = select_in_n_out_lambda(s.b_star, labeled, pool, validation);
  CHECK(sel.validation_risks.size() == 11);  // default grid 0.0 .. 1.0
  double best = *std::min_element(sel.validation_risks.begin(), sel.validation_risks.end());
  CHECK(best == sel.validation_risks[static_cast<std::size_t>(std::lround(sel.lambda * 10))]);

  // A one-point grid degenerates to that lambda.
  const std::vector<double> only_zero{0.0};
  const LambdaSelection fixed =
      select_in_n_out_lambda(s.b_star, labeled, pool, validation, only_zero);
  CHECK(fixed.lambda == 0.0);
  const FeatureModel transfer = transfer_aux_outputs(s.b_star, labeled);
  CHECK((fixed.model.theta_w_hat - transfer.theta_w_hat).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("intercept fitting is available and harmless at zero means") {
  const ProblemSetting s = make_problem_setting(Dims{5, 2, 2, 3}, 50, 2.0);
  const Dataset d = sample_dataset(s, 400, Origin::Id, true, false, 51);
  const LinearPredictor with = fit_baseline(d, FitOptions{true});
  const LinearPredictor without = fit_baseline(d);
  // Zero-mean generative model: the fitted intercept is a diagnostic
  // that shrinks with n.
  CHECK(std::abs(with.intercept) <= 0.5);
  CHECK((with.theta_x - without.theta_x).cwiseAbs().maxCoeff() <= 0.2);
  CHECK(fit_aux_inputs(d, FitOptions{true}).intercept != 0.0);
}
