#include "auxshift/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "auxshift/rng.hpp"

namespace auxshift {

namespace {

using nlohmann::json;

void reject_unknown_fields(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known) throw std::runtime_error("config: unknown field '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::runtime_error("config: bad value for '" + std::string(key) + "' in " + where +
                             ": " + e.what());
  }
}

DistFamily family_from_string(const std::string& s) {
  if (s == "gaussian") return DistFamily::Gaussian;
  if (s == "uniform-box") return DistFamily::UniformBox;
  if (s == "uniform-ball") return DistFamily::UniformBall;
  throw std::runtime_error("unknown distribution family: " + s);
}

Origin origin_from_string(const std::string& s) {
  if (s == "id") return Origin::Id;
  if (s == "ood") return Origin::Ood;
  throw std::runtime_error("unknown origin: " + s);
}

NoiseFamily noise_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::Gaussian;
  if (s == "uniform") return NoiseFamily::Uniform;
  throw std::runtime_error("unknown noise family: " + s);
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::runtime_error("matrix: data length does not match rows * cols");
  Eigen::MatrixXd m(rows, cols);
  std::size_t at = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[at++];
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(data.size()));
}

json to_json(const Dims& dims) {
  return json{{"d", dims.d}, {"k", dims.k}, {"m", dims.m}, {"T", dims.T}};
}

Dims dims_from_json(const json& j) {
  reject_unknown_fields(j, {"d", "k", "m", "T"}, "dims");
  Dims dims;
  dims.d = j.at("d").get<int>();
  dims.k = j.at("k").get<int>();
  dims.m = j.at("m").get<int>();
  dims.T = j.at("T").get<int>();
  dims.validate();
  return dims;
}

json to_json(const DistributionSpec& spec) {
  json j{{"family", to_string(spec.family)}, {"mean", vector_to_json(spec.mean)}};
  switch (spec.family) {
    case DistFamily::Gaussian: j["covariance"] = matrix_to_json(spec.covariance); break;
    case DistFamily::UniformBox: j["half_width"] = vector_to_json(spec.half_width); break;
    case DistFamily::UniformBall: j["radius"] = spec.radius; break;
  }
  return j;
}

DistributionSpec distribution_from_json(const json& j) {
  reject_unknown_fields(j, {"family", "mean", "covariance", "half_width", "radius"},
                        "distribution");
  DistributionSpec spec;
  spec.family = family_from_string(j.at("family").get<std::string>());
  spec.mean = vector_from_json(j.at("mean"));
  switch (spec.family) {
    case DistFamily::Gaussian: spec.covariance = matrix_from_json(j.at("covariance")); break;
    case DistFamily::UniformBox: spec.half_width = vector_from_json(j.at("half_width")); break;
    case DistFamily::UniformBall: spec.radius = j.at("radius").get<double>(); break;
  }
  spec.validate();
  return spec;
}

json to_json(const ProblemSetting& setting) {
  return json{{"schema_version", kSchemaVersion},
              {"dims", to_json(setting.dims)},
              {"a_star", matrix_to_json(setting.a_star)},
              {"b_star", matrix_to_json(setting.b_star)},
              {"c_star", matrix_to_json(setting.c_star)},
              {"theta_w", vector_to_json(setting.theta_w)},
              {"theta_u", vector_to_json(setting.theta_u)},
              {"sigma_sq", setting.sigma_sq},
              {"noise_family",
               setting.noise_family == NoiseFamily::Gaussian ? "gaussian" : "uniform"},
              {"p_x", to_json(setting.p_x)},
              {"p_u", to_json(setting.p_u)},
              {"p_x_ood", to_json(setting.p_x_ood)},
              {"p_u_ood", to_json(setting.p_u_ood)}};
}

ProblemSetting setting_from_json(const json& j) {
  reject_unknown_fields(j,
                        {"schema_version", "dims", "a_star", "b_star", "c_star", "theta_w",
                         "theta_u", "sigma_sq", "noise_family", "p_x", "p_u", "p_x_ood",
                         "p_u_ood"},
                        "problem setting");
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw std::runtime_error("problem setting: unsupported schema version");
  ProblemSetting s;
  s.dims = dims_from_json(j.at("dims"));
  s.a_star = matrix_from_json(j.at("a_star"));
  s.b_star = matrix_from_json(j.at("b_star"));
  s.c_star = matrix_from_json(j.at("c_star"));
  s.theta_w = vector_from_json(j.at("theta_w"));
  s.theta_u = vector_from_json(j.at("theta_u"));
  s.sigma_sq = j.at("sigma_sq").get<double>();
  s.noise_family = noise_from_string(j.at("noise_family").get<std::string>());
  s.p_x = distribution_from_json(j.at("p_x"));
  s.p_u = distribution_from_json(j.at("p_u"));
  s.p_x_ood = distribution_from_json(j.at("p_x_ood"));
  s.p_u_ood = distribution_from_json(j.at("p_u_ood"));
  s.validate();
  return s;
}

json to_json(const LinearPredictor& model) {
  return json{{"kind", "linear"},
              {"theta_x", vector_to_json(model.theta_x)},
              {"theta_z", vector_to_json(model.theta_z)},
              {"intercept", model.intercept}};
}

json to_json(const FeatureModel& model) {
  return json{{"kind", "feature"},
              {"b_hat", matrix_to_json(model.b_hat)},
              {"theta_w_hat", vector_to_json(model.theta_w_hat)}};
}

LinearPredictor linear_predictor_from_json(const json& j) {
  reject_unknown_fields(j, {"kind", "theta_x", "theta_z", "intercept"}, "linear predictor");
  if (j.at("kind").get<std::string>() != "linear")
    throw std::runtime_error("expected model kind 'linear'");
  LinearPredictor m;
  m.theta_x = vector_from_json(j.at("theta_x"));
  m.theta_z = vector_from_json(j.at("theta_z"));
  m.intercept = j.at("intercept").get<double>();
  return m;
}

FeatureModel feature_model_from_json(const json& j) {
  reject_unknown_fields(j, {"kind", "b_hat", "theta_w_hat"}, "feature model");
  if (j.at("kind").get<std::string>() != "feature")
    throw std::runtime_error("expected model kind 'feature'");
  FeatureModel m;
  m.b_hat = matrix_from_json(j.at("b_hat"));
  m.theta_w_hat = vector_from_json(j.at("theta_w_hat"));
  return m;
}

std::string risk_report_csv_header() {
  return "model,origin,method,risk,bayes,excess,x_term,u_term,noise_term,mc_std_err,seed\n";
}

std::string risk_report_csv_row(const std::string& model, const RiskReport& r,
                                std::uint64_t seed) {
  std::string line = model + "," + to_string(r.origin) + "," + to_string(r.method);
  for (double v : {r.risk, r.bayes, r.excess, r.x_term, r.u_term, r.noise_term})
    line += "," + format_double(v);
  line += "," + (r.mc_std_err ? format_double(*r.mc_std_err) : std::string());
  line += "," + std::to_string(seed) + "\n";
  return line;
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  line += '\n';
  return line;
}

std::string csv_line(const std::vector<double>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += format_double(cells[i]);
  }
  line += '\n';
  return line;
}

std::string config_hash(const json& canonical) {
  const std::string dump = canonical.dump();
  const std::uint64_t h = hash_label(dump);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

json to_json(const SuiteConfig& c) {
  return json{{"suite", c.suite},
              {"dims", to_json(c.dims)},
              {"n_labeled", c.n_labeled},
              {"m_id", c.m_id},
              {"m_ood", c.m_ood},
              {"trials", c.trials},
              {"redraws", c.redraws},
              {"base_seed", c.base_seed},
              {"sigma_sq", c.sigma_sq},
              {"target_sigma_u_sq", c.target_sigma_u_sq},
              {"conditioning", c.conditioning},
              {"sigma_grid", c.sigma_grid},
              {"r_grid", c.r_grid},
              {"pool_grid", c.pool_grid},
              {"pool_check_trials", c.pool_check_trials},
              {"shift_scale_min", c.shift_scale_min},
              {"shift_scale_max", c.shift_scale_max},
              {"mean_shift", c.mean_shift},
              {"pass_fraction", c.pass_fraction},
              {"se_mult", c.se_mult},
              {"gap_se_mult", c.gap_se_mult},
              {"angle_tol", c.angle_tol},
              {"exact_tol", c.exact_tol},
              {"approx_tol", c.approx_tol},
              {"psd_tol", c.psd_tol},
              {"min_sing_tol", c.min_sing_tol},
              {"ratio_decile_factor", c.ratio_decile_factor},
              {"pass_min_n", c.pass_min_n}};
}

namespace {

SuiteConfig suite_config_from_json(const json& j, SuiteConfig c) {
  const std::string where = "suites." + c.suite;
  reject_unknown_fields(
      j, {"dims",           "n_labeled",       "m_id",
          "m_ood",          "trials",          "redraws",
          "base_seed",      "sigma_sq",        "target_sigma_u_sq",
          "conditioning",   "sigma_grid",      "r_grid",
          "pool_grid",      "pool_check_trials", "shift_scale_min",
          "shift_scale_max", "mean_shift",     "pass_fraction",
          "se_mult",        "gap_se_mult",     "angle_tol",
          "exact_tol",      "approx_tol",      "psd_tol",
          "min_sing_tol",   "ratio_decile_factor", "pass_min_n",
          "jobs"},
      where);
  if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
  read_field(j, "n_labeled", c.n_labeled, where);
  read_field(j, "m_id", c.m_id, where);
  read_field(j, "m_ood", c.m_ood, where);
  read_field(j, "trials", c.trials, where);
  read_field(j, "redraws", c.redraws, where);
  read_field(j, "base_seed", c.base_seed, where);
  read_field(j, "sigma_sq", c.sigma_sq, where);
  read_field(j, "target_sigma_u_sq", c.target_sigma_u_sq, where);
  read_field(j, "conditioning", c.conditioning, where);
  read_field(j, "sigma_grid", c.sigma_grid, where);
  read_field(j, "r_grid", c.r_grid, where);
  read_field(j, "pool_grid", c.pool_grid, where);
  read_field(j, "pool_check_trials", c.pool_check_trials, where);
  read_field(j, "shift_scale_min", c.shift_scale_min, where);
  read_field(j, "shift_scale_max", c.shift_scale_max, where);
  read_field(j, "mean_shift", c.mean_shift, where);
  read_field(j, "pass_fraction", c.pass_fraction, where);
  read_field(j, "se_mult", c.se_mult, where);
  read_field(j, "gap_se_mult", c.gap_se_mult, where);
  read_field(j, "angle_tol", c.angle_tol, where);
  read_field(j, "exact_tol", c.exact_tol, where);
  read_field(j, "approx_tol", c.approx_tol, where);
  read_field(j, "psd_tol", c.psd_tol, where);
  read_field(j, "min_sing_tol", c.min_sing_tol, where);
  read_field(j, "ratio_decile_factor", c.ratio_decile_factor, where);
  read_field(j, "pass_min_n", c.pass_min_n, where);
  read_field(j, "jobs", c.jobs, where);
  if (c.trials < 1) throw std::runtime_error("config: " + where + ".trials must be >= 1");
  return c;
}

DemoConfig demo_config_from_json(const json& j, DemoConfig c) {
  reject_unknown_fields(j,
                        {"dims", "n_labeled", "m_id", "m_ood", "sigma_sq", "target_sigma_u_sq",
                         "conditioning", "lambda", "shift_scale_min", "shift_scale_max",
                         "mean_shift", "seed"},
                        "demo");
  if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
  read_field(j, "n_labeled", c.n_labeled, "demo");
  read_field(j, "m_id", c.m_id, "demo");
  read_field(j, "m_ood", c.m_ood, "demo");
  read_field(j, "sigma_sq", c.sigma_sq, "demo");
  read_field(j, "target_sigma_u_sq", c.target_sigma_u_sq, "demo");
  read_field(j, "conditioning", c.conditioning, "demo");
  read_field(j, "lambda", c.lambda, "demo");
  read_field(j, "shift_scale_min", c.shift_scale_min, "demo");
  read_field(j, "shift_scale_max", c.shift_scale_max, "demo");
  read_field(j, "mean_shift", c.mean_shift, "demo");
  read_field(j, "seed", c.seed, "demo");
  return c;
}

}  // namespace

json to_json(const DemoConfig& c) {
  return json{{"dims", to_json(c.dims)},
              {"n_labeled", c.n_labeled},
              {"m_id", c.m_id},
              {"m_ood", c.m_ood},
              {"sigma_sq", c.sigma_sq},
              {"target_sigma_u_sq", c.target_sigma_u_sq},
              {"conditioning", c.conditioning},
              {"lambda", c.lambda},
              {"shift_scale_min", c.shift_scale_min},
              {"shift_scale_max", c.shift_scale_max},
              {"mean_shift", c.mean_shift},
              {"seed", c.seed}};
}

ToolConfig default_tool_config() {
  ToolConfig config;
  for (const std::string& name : suite_names())
    config.suites.push_back(default_suite_config(name));
  return config;
}

ToolConfig tool_config_from_json(const json& j) {
  reject_unknown_fields(j, {"schema_version", "seed", "jobs", "suites", "demo", "sweep"},
                        "top level");
  if (!j.contains("schema_version"))
    throw std::runtime_error("config: missing required field 'schema_version'");
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw std::runtime_error("config: unsupported schema_version (expected " +
                             std::to_string(kSchemaVersion) + ")");
  ToolConfig config = default_tool_config();
  read_field(j, "seed", config.seed, "top level");
  read_field(j, "jobs", config.jobs, "top level");
  if (j.contains("suites")) {
    const json& suites = j.at("suites");
    if (!suites.is_object()) throw std::runtime_error("config: 'suites' must be an object");
    for (const auto& [name, body] : suites.items()) {
      bool found = false;
      for (SuiteConfig& c : config.suites) {
        if (c.suite == name) {
          c = suite_config_from_json(body, c);
          found = true;
        }
      }
      if (!found) throw std::runtime_error("config: unknown suite '" + name + "' in suites");
    }
  }
  if (j.contains("demo")) config.demo = demo_config_from_json(j.at("demo"), config.demo);
  if (j.contains("sweep")) {
    reject_unknown_fields(j.at("sweep"), {"trials"}, "sweep");
    read_field(j.at("sweep"), "trials", config.sweep.trials, "sweep");
    if (config.sweep.trials < 1) throw std::runtime_error("config: sweep.trials must be >= 1");
  }
  return config;
}

ToolConfig load_tool_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: parse error in " + path + ": " + e.what());
  }
  return tool_config_from_json(j);
}

json to_json(const ToolConfig& config) {
  json suites = json::object();
  for (const SuiteConfig& c : config.suites) suites[c.suite] = to_json(c);
  return json{{"schema_version", config.schema_version},
              {"seed", config.seed},
              {"jobs", config.jobs},
              {"suites", suites},
              {"demo", to_json(config.demo)},
              {"sweep", json{{"trials", config.sweep.trials}}}};
}

}  // namespace auxshift
