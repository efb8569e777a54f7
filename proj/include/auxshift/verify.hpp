#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "auxshift/problem.hpp"

namespace auxshift {

/// Knobs for one verification suite. Statistical pass thresholds live
/// here, never in the suite bodies; every suite is a deterministic
/// function of its config.
struct SuiteConfig {
  std::string suite;
  Dims dims{8, 3, 2, 4};
  int n_labeled = 50;
  long m_id = 10000;   // ID unlabeled pool size
  long m_ood = 10000;  // OOD unlabeled pool size
  int trials = 200;
  int redraws = 200;  // Y | X redraws per trial where applicable
  std::uint64_t base_seed = 20260810;
  double sigma_sq = 0.1;
  // Target value of theta_u^T Cov(u) theta_u for sampled settings;
  // theta_u is rescaled to hit it. Negative leaves theta_u as drawn.
  double target_sigma_u_sq = 1.0;
  double conditioning = 3.0;
  std::vector<double> sigma_grid;   // thm2
  std::vector<double> r_grid;       // example1
  std::vector<long> pool_grid;      // rowspace, closed_forms
  int pool_check_trials = 10;       // closed_forms: trials that run the pool sweep

  // OOD shift family: per-axis covariance scale range (log-uniform),
  // random rotation, and a mean shift for x only.
  double shift_scale_min = 0.1;
  double shift_scale_max = 10.0;
  double mean_shift = 1.0;

  // Tolerances (encode the theorems' probabilistic slack).
  double pass_fraction = 0.95;  // prop1 win rate, thm1 strict fraction
  double se_mult = 3.0;         // band width in standard errors
  double gap_se_mult = 2.0;     // example1 monotonicity slack
  double angle_tol = 0.05;      // rowspace: max principal angle at largest pool
  double exact_tol = 1e-8;      // closed forms, noiseless rowspace
  double approx_tol = 1e-2;     // empirical self-training vs closed form
  double psd_tol = -1e-8;       // min-eigenvalue floor
  double min_sing_tol = 1e-6;   // 1st-percentile floor
  double ratio_decile_factor = 10.0;  // thm2: ratio(lo) <= ratio(hi) / factor
  int pass_min_n = 50;  // prop1: below this n the pass flag is not required

  int jobs = 0;  // 0 = hardware concurrency
};

/// Machine-readable outcome of one suite: per-trial rows plus the pass
/// decision, which is a pure function of (columns, rows, config).
struct SuiteReport {
  std::string suite;
  bool pass = false;
  bool applicable = true;  // false when a theorem hypothesis is violated
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, double>> aggregates;
  SuiteConfig config;
  std::string note;
};

/// Canonical suite names, in execution order for "all".
const std::vector<std::string>& suite_names();

/// Replaces the OOD distributions with a random covariate shift from the
/// parameterized family: rotated, per-axis rescaled (log-uniform in
/// [scale_min, scale_max]) Gaussian covariances, plus a mean shift for x
/// only; u stays zero-mean.
void randomize_ood_shift(ProblemSetting& setting, std::uint64_t seed, double scale_min,
                         double scale_max, double mean_shift);

/// Built-in defaults for one suite; throws on unknown names.
SuiteConfig default_suite_config(const std::string& suite);

/// Aux-inputs beats the baseline in-distribution (requires T = m).
SuiteReport verify_prop1(const SuiteConfig& config);

/// Aux-inputs loses to the baseline under the adversarial OOD shift,
/// with a gap growing in the shift magnitude R.
SuiteReport verify_example1(const SuiteConfig& config);

/// Pre-training beats the baseline OOD for arbitrary covariate shift,
/// in expectation over Y | X.
SuiteReport verify_thm1(const SuiteConfig& config);

/// (X^T X)^{-1} - B^T (B X^T X B^T)^{-1} B is positive semi-definite.
SuiteReport verify_psd_inequality(const SuiteConfig& config);

/// The In-N-Out / aux-outputs OOD excess-risk ratio shrinks with the
/// label noise.
SuiteReport verify_thm2(const SuiteConfig& config);

/// Reduced-rank pre-training recovers the rowspace of B*.
SuiteReport verify_rowspace_lemma(const SuiteConfig& config);

/// Minimum singular values of W and [W; U] stay bounded away from zero.
SuiteReport verify_minsing_lemma(const SuiteConfig& config);

/// The three In-N-Out estimators (oracle-latent closed form, population
/// self-training head, empirical pool self-training) agree.
SuiteReport verify_closed_forms(const SuiteConfig& config);

/// Dispatch by config.suite.
SuiteReport run_suite(const SuiteConfig& config);

/// Re-evaluates a pass decision from persisted rows (offline check).
bool evaluate_pass(const std::string& suite, const std::vector<std::string>& columns,
                   const std::vector<std::vector<double>>& rows, const SuiteConfig& config);

struct RunSuitesResult {
  std::vector<SuiteReport> reports;
  int exit_status = 0;  // nonzero when any pass flag is false
};

/// Runs suites (trials in parallel), writes a CSV per suite plus a JSON
/// summary and manifest under out_dir (empty out_dir skips all I/O).
RunSuitesResult run_suites(const std::vector<SuiteConfig>& configs, const std::string& out_dir);

}  // namespace auxshift
