#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxshift/estimators.hpp"
#include "auxshift/problem.hpp"
#include "auxshift/risk.hpp"
#include "auxshift/verify.hpp"

namespace auxshift {

inline constexpr int kSchemaVersion = 1;

/// Shortest-round-trip decimal rendering (17 significant digits,
/// locale-independent). All numeric file output goes through this.
std::string format_double(double value);

/// Matrices serialize as {"rows", "cols", "data"} with row-major data.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Dims& dims);
Dims dims_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DistributionSpec& spec);
DistributionSpec distribution_from_json(const nlohmann::json& j);

/// Round-trips every field plus a schema-version tag; validates on read.
nlohmann::json to_json(const ProblemSetting& setting);
ProblemSetting setting_from_json(const nlohmann::json& j);

/// Fitted models carry a model-kind tag.
nlohmann::json to_json(const LinearPredictor& model);
nlohmann::json to_json(const FeatureModel& model);
LinearPredictor linear_predictor_from_json(const nlohmann::json& j);
FeatureModel feature_model_from_json(const nlohmann::json& j);

/// CSV columns for a RiskReport row, per the reporting schema:
/// model, origin, method, risk, bayes, excess, x_term, u_term,
/// noise_term, mc_std_err, seed.
std::string risk_report_csv_header();
std::string risk_report_csv_row(const std::string& model, const RiskReport& report,
                                std::uint64_t seed);

/// Minimal CSV writer: '.' decimal, no locale, no quoting of numerics.
std::string csv_line(const std::vector<std::string>& cells);
std::string csv_line(const std::vector<double>& cells);

/// Stable 64-bit digest (FNV-1a) of the canonicalized (sorted-key,
/// compact) JSON document, as 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);

/// Tool configuration file: a strict JSON document. Unknown fields are
/// rejected anywhere in the tree.
struct DemoConfig {
  Dims dims{6, 2, 2, 2};
  int n_labeled = 40;
  long m_id = 5000;
  long m_ood = 5000;
  double sigma_sq = 0.01;
  double target_sigma_u_sq = 1.0;
  double conditioning = 3.0;
  double lambda = 0.9;
  double shift_scale_min = 0.5;
  double shift_scale_max = 5.0;
  double mean_shift = 1.0;
  std::uint64_t seed = 1;
};

struct SweepConfig {
  int trials = 5;
};

struct ToolConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 20260810;
  int jobs = 0;
  std::vector<SuiteConfig> suites;  // one per known suite, defaults applied
  DemoConfig demo;
  SweepConfig sweep;
};

/// Defaults for every suite plus demo/sweep sections.
ToolConfig default_tool_config();

/// Parses and validates a config document against the schema; throws
/// std::runtime_error with field diagnostics on malformed input.
ToolConfig tool_config_from_json(const nlohmann::json& j);
ToolConfig load_tool_config(const std::string& path);

/// Canonical JSON for hashing and echoing.
nlohmann::json to_json(const SuiteConfig& config);
nlohmann::json to_json(const ToolConfig& config);

}  // namespace auxshift
