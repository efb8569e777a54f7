// auxshift: simulation lab for linear multi-task prediction with
// auxiliary information under covariate shift. Subcommands:
//   verify  run theorem-verification suites, write CSV + JSON reports
//   demo    run the four-model pipeline once and tabulate risks
//   sweep   re-run the demo pipeline along one parameter axis
// Exit codes: 0 pass, 1 suite failure, 2 usage/config error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "auxshift/estimators.hpp"
#include "auxshift/io.hpp"
#include "auxshift/problem.hpp"
#include "auxshift/risk.hpp"
#include "auxshift/rng.hpp"
#include "auxshift/verify.hpp"
#include "auxshift/version.hpp"

namespace {

using namespace auxshift;
namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "auxshift_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> jobs;
  std::string format = "csv";
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "base seed override");
  cmd->add_option("--trials", args.trials, "trial count override");
  cmd->add_option("--jobs", args.jobs, "worker threads (0 = all cores)");
  cmd->add_option("--format", args.format, "stdout format")
      ->check(CLI::IsMember({"csv", "json"}));
}

ToolConfig resolve_config(const CommonArgs& args) {
  ToolConfig config =
      args.config_path.empty() ? default_tool_config() : load_tool_config(args.config_path);
  if (args.seed) {
    config.seed = *args.seed;
    config.demo.seed = *args.seed;
  }
  if (args.jobs) config.jobs = *args.jobs;
  for (SuiteConfig& c : config.suites) {
    if (args.seed) c.base_seed = *args.seed;
    if (args.trials) c.trials = *args.trials;
    c.jobs = config.jobs;
  }
  if (args.trials) config.sweep.trials = *args.trials;
  return config;
}

void write_manifest(const std::string& out_dir, const nlohmann::json& canonical_config,
                    std::uint64_t seed, const std::vector<std::string>& files) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  nlohmann::json manifest = {
      {"tool_version", kVersion},
      {"config_hash", config_hash(canonical_config)},
      {"base_seed", seed},
      {"timestamp_unix_ms",
       std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
      {"out_dir", out_dir},
      {"files", files}};
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest to " + out_dir);
  out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// demo / sweep pipeline

struct PipelineParams {
  DemoConfig demo;
  double lambda;
  int n_labeled;
  long m_id, m_ood;
  double sigma_sq;
  double shift_scale_min, shift_scale_max;
};

PipelineParams pipeline_params(const DemoConfig& demo) {
  return PipelineParams{demo,          demo.lambda, demo.n_labeled,
                        demo.m_id,     demo.m_ood,  demo.sigma_sq,
                        demo.shift_scale_min, demo.shift_scale_max};
}

struct PipelineRow {
  std::string model;
  RiskReport id_report;
  RiskReport ood_report;
};

std::vector<PipelineRow> run_pipeline(const PipelineParams& p, std::uint64_t seed) {
  const DemoConfig& demo = p.demo;
  if (demo.dims.T != demo.dims.m)
    throw std::runtime_error("demo: requires dims with T = m (aux-inputs Bayes risk)");

  ProblemSetting setting =
      make_problem_setting(demo.dims, derive_seed(seed, "demo-setting", 0), demo.conditioning);
  if (demo.target_sigma_u_sq > 0.0) {
    const double current = oracle_moments(setting, Origin::Id).sigma_u_sq;
    setting.theta_u *= std::sqrt(demo.target_sigma_u_sq / current);
  }
  setting.sigma_sq = p.sigma_sq;
  randomize_ood_shift(setting, derive_seed(seed, "demo-shift", 0), p.shift_scale_min,
                      p.shift_scale_max, demo.mean_shift);

  const Dataset labeled = sample_dataset(setting, p.n_labeled, Origin::Id, true, false,
                                         derive_seed(seed, "demo-labeled", 0));
  std::vector<Dataset> pool;
  pool.push_back(sample_dataset(setting, p.m_id, Origin::Id, false, false,
                                derive_seed(seed, "demo-pool-id", 0)));
  pool.push_back(sample_dataset(setting, p.m_ood, Origin::Ood, false, false,
                                derive_seed(seed, "demo-pool-ood", 0)));

  const LinearPredictor baseline = fit_baseline(labeled);
  const LinearPredictor aux_inputs = fit_aux_inputs(labeled);
  const Eigen::MatrixXd b_hat = pretrain_aux_outputs(pool, setting.dims.k);
  const FeatureModel aux_outputs = transfer_aux_outputs(b_hat, labeled);
  const FeatureModel in_n_out =
      fit_in_n_out(b_hat, labeled, pool.front(), InNOutOptions{p.lambda});

  std::vector<PipelineRow> rows;
  rows.push_back({"baseline", analytic_risk(baseline, setting, Origin::Id),
                  analytic_risk(baseline, setting, Origin::Ood)});
  rows.push_back({"aux-inputs", analytic_risk(aux_inputs, setting, Origin::Id),
                  analytic_risk(aux_inputs, setting, Origin::Ood)});
  rows.push_back({"aux-outputs", analytic_risk(aux_outputs, setting, Origin::Id),
                  analytic_risk(aux_outputs, setting, Origin::Ood)});
  rows.push_back({"in-n-out", analytic_risk(in_n_out, setting, Origin::Id),
                  analytic_risk(in_n_out, setting, Origin::Ood)});
  return rows;
}

int cmd_demo(const CommonArgs& args) {
  const ToolConfig config = resolve_config(args);
  const std::vector<PipelineRow> rows =
      run_pipeline(pipeline_params(config.demo), config.demo.seed);

  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows)
    table.push_back({{"model", r.model},
                     {"risk_id", r.id_report.risk},
                     {"risk_ood", r.ood_report.risk},
                     {"excess_id", r.id_report.excess},
                     {"excess_ood", r.ood_report.excess}});

  if (args.format == "json") {
    std::cout << table.dump(2) << "\n";
  } else {
    std::printf("%-12s %14s %14s %14s %14s\n", "model", "risk_id", "risk_ood", "excess_id",
                "excess_ood");
    for (const auto& r : rows)
      std::printf("%-12s %14.6g %14.6g %14.6g %14.6g\n", r.model.c_str(), r.id_report.risk,
                  r.ood_report.risk, r.id_report.excess, r.ood_report.excess);
  }

  fs::create_directories(args.out_dir);
  std::vector<std::string> files;
  if (args.format == "json") {
    std::ofstream f(fs::path(args.out_dir) / "demo.json", std::ios::binary);
    f << table.dump(2) << "\n";
    files.push_back("demo.json");
  } else {
    std::string csv = risk_report_csv_header();
    for (const auto& r : rows) {
      csv += risk_report_csv_row(r.model, r.id_report, config.demo.seed);
      csv += risk_report_csv_row(r.model, r.ood_report, config.demo.seed);
    }
    std::ofstream f(fs::path(args.out_dir) / "demo.csv", std::ios::binary);
    f << csv;
    files.push_back("demo.csv");
  }
  write_manifest(args.out_dir, to_json(config), config.demo.seed, files);
  return 0;
}

int cmd_sweep(const std::string& axis, const std::vector<double>& grid, const CommonArgs& args) {
  const ToolConfig config = resolve_config(args);
  const int trials = config.sweep.trials;

  std::string csv = csv_line(std::vector<std::string>{axis, "model", "origin", "risk",
                                                      "excess", "trial"});
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double value = grid[gi];
    for (int t = 0; t < trials; ++t) {
      PipelineParams p = pipeline_params(config.demo);
      if (axis == "sigma_sq") {
        p.sigma_sq = value;
      } else if (axis == "lambda") {
        p.lambda = value;
      } else if (axis == "n_labeled") {
        p.n_labeled = static_cast<int>(value);
      } else if (axis == "pool_size") {
        p.m_id = p.m_ood = static_cast<long>(value);
      } else if (axis == "shift_scale") {
        p.shift_scale_min = std::min(value, 1.0 / value);
        p.shift_scale_max = std::max(value, 1.0 / value);
      }
      const std::uint64_t seed = derive_seed(
          config.seed, "sweep-" + axis, gi * static_cast<std::size_t>(trials) + t);
      const std::vector<PipelineRow> rows = run_pipeline(p, seed);
      for (const auto& r : rows) {
        for (const auto* rep : {&r.id_report, &r.ood_report}) {
          csv += format_double(value) + "," + r.model + "," + to_string(rep->origin) + "," +
                 format_double(rep->risk) + "," + format_double(rep->excess) + "," +
                 std::to_string(t) + "\n";
        }
      }
    }
  }

  fs::create_directories(args.out_dir);
  const std::string name = "sweep_" + axis + ".csv";
  {
    std::ofstream f(fs::path(args.out_dir) / name, std::ios::binary);
    f << csv;
  }
  write_manifest(args.out_dir, to_json(config), config.seed, {name});
  if (args.format == "json") {
    std::cout << nlohmann::json({{"axis", axis}, {"grid", grid}, {"trials", trials},
                                 {"file", name}})
                     .dump(2)
              << "\n";
  }
  return 0;
}

int cmd_verify(const std::vector<std::string>& requested, const CommonArgs& args) {
  const ToolConfig config = resolve_config(args);

  std::vector<std::string> names;
  for (const std::string& s : requested) {
    if (s == "all") {
      names = suite_names();
      break;
    }
    names.push_back(s);
  }
  std::vector<SuiteConfig> configs;
  for (const std::string& name : names) {
    bool found = false;
    for (const SuiteConfig& c : config.suites) {
      if (c.suite == name) {
        configs.push_back(c);
        found = true;
      }
    }
    if (!found) {
      std::cerr << "unknown suite '" << name << "'; valid suites:";
      for (const std::string& n : suite_names()) std::cerr << " " << n;
      std::cerr << " all\n";
      return 2;
    }
  }

  const RunSuitesResult result = run_suites(configs, args.out_dir);
  for (const SuiteReport& r : result.reports) {
    std::printf("[%s] %-12s", r.pass ? "PASS" : "FAIL", r.suite.c_str());
    if (!r.applicable) std::printf(" (not applicable: %s)", r.note.c_str());
    std::printf("\n");
  }
  if (args.format == "json") {
    nlohmann::json out = nlohmann::json::array();
    for (const SuiteReport& r : result.reports)
      out.push_back({{"suite", r.suite}, {"pass", r.pass}, {"applicable", r.applicable}});
    std::cout << out.dump(2) << "\n";
  }
  return result.exit_status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear multi-task auxiliary-information lab"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonArgs verify_args, demo_args, sweep_args;
  std::vector<std::string> suites;
  std::string axis;
  std::vector<double> grid;

  CLI::App* verify = app.add_subcommand("verify", "run verification suites");
  verify->add_option("suites", suites, "suite names or 'all'")->required();
  add_common_options(verify, verify_args);

  CLI::App* demo = app.add_subcommand("demo", "run the four-model pipeline once");
  add_common_options(demo, demo_args);

  CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis of the demo pipeline");
  sweep->add_option("axis", axis, "axis to sweep")
      ->required()
      ->check(CLI::IsMember({"sigma_sq", "lambda", "n_labeled", "pool_size", "shift_scale"}));
  sweep->add_option("--grid", grid, "comma-separated grid values")
      ->required()
      ->delimiter(',');
  add_common_options(sweep, sweep_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(suites, verify_args);
    if (demo->parsed()) return cmd_demo(demo_args);
    if (sweep->parsed()) {
      if (grid.empty()) {
        std::cerr << "sweep: empty grid\n";
        return 2;
      }
      return cmd_sweep(axis, grid, sweep_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
