#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "auxshift/estimators.hpp"
#include "auxshift/io.hpp"
#include "auxshift/numerics.hpp"
#include "auxshift/problem.hpp"
#include "auxshift/risk.hpp"
#include "auxshift/verify.hpp"
#include "auxshift/version.hpp"

namespace py = pybind11;
using namespace auxshift;

namespace {

std::optional<double> report_std_err(const RiskReport& r) { return r.mc_std_err; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Linear multi-task auxiliary-information lab";
  m.attr("__version__") = kVersion;

  py::enum_<DistFamily>(m, "DistFamily")
      .value("gaussian", DistFamily::Gaussian)
      .value("uniform_box", DistFamily::UniformBox)
      .value("uniform_ball", DistFamily::UniformBall);
  py::enum_<Origin>(m, "Origin").value("id", Origin::Id).value("ood", Origin::Ood);
  py::enum_<NoiseFamily>(m, "NoiseFamily")
      .value("gaussian", NoiseFamily::Gaussian)
      .value("uniform", NoiseFamily::Uniform);
  py::enum_<RiskMethod>(m, "RiskMethod")
      .value("analytic", RiskMethod::Analytic)
      .value("monte_carlo", RiskMethod::MonteCarlo);
  py::enum_<PredictorClass>(m, "PredictorClass")
      .value("x_only", PredictorClass::XOnly)
      .value("x_and_z", PredictorClass::XAndZ);
  py::enum_<PseudolabelDesign>(m, "PseudolabelDesign")
      .value("features", PseudolabelDesign::Features)
      .value("raw_inputs", PseudolabelDesign::RawInputs);

  py::class_<Dims>(m, "Dims")
      .def(py::init([](int d, int k, int mm, int T) {
             Dims dims{d, k, mm, T};
             dims.validate();
             return dims;
           }),
           py::arg("d"), py::arg("k"), py::arg("m"), py::arg("T"))
      .def_readonly("d", &Dims::d)
      .def_readonly("k", &Dims::k)
      .def_readonly("m", &Dims::m)
      .def_readonly("T", &Dims::T);

  py::class_<DistributionSpec>(m, "DistributionSpec")
      .def_static("gaussian", &DistributionSpec::gaussian, py::arg("mean"),
                  py::arg("covariance"))
      .def_static("uniform_box", &DistributionSpec::uniform_box, py::arg("mean"),
                  py::arg("half_width"))
      .def_static("uniform_ball", &DistributionSpec::uniform_ball, py::arg("mean"),
                  py::arg("radius"), py::arg("dim"))
      .def_readonly("family", &DistributionSpec::family)
      .def_readonly("mean", &DistributionSpec::mean)
      .def_readonly("radius", &DistributionSpec::radius)
      .def("covariance_matrix", &DistributionSpec::covariance_matrix)
      .def("second_moment", &DistributionSpec::second_moment);

  py::class_<ProblemSetting>(m, "ProblemSetting")
      .def_readonly("dims", &ProblemSetting::dims)
      .def_readwrite("a_star", &ProblemSetting::a_star)
      .def_readwrite("b_star", &ProblemSetting::b_star)
      .def_readwrite("c_star", &ProblemSetting::c_star)
      .def_readwrite("theta_w", &ProblemSetting::theta_w)
      .def_readwrite("theta_u", &ProblemSetting::theta_u)
      .def_readwrite("sigma_sq", &ProblemSetting::sigma_sq)
      .def_readwrite("p_x", &ProblemSetting::p_x)
      .def_readwrite("p_u", &ProblemSetting::p_u)
      .def_readwrite("p_x_ood", &ProblemSetting::p_x_ood)
      .def_readwrite("p_u_ood", &ProblemSetting::p_u_ood)
      .def("theta_x_star", &ProblemSetting::theta_x_star)
      .def("validate", &ProblemSetting::validate)
      .def("to_json", [](const ProblemSetting& s) { return to_json(s).dump(2); })
      .def_static("from_json", [](const std::string& text) {
        return setting_from_json(nlohmann::json::parse(text));
      });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("x", &Dataset::x)
      .def_readonly("z", &Dataset::z)
      .def_readonly("y", &Dataset::y)
      .def_readonly("u", &Dataset::u)
      .def_readonly("origin", &Dataset::origin)
      .def_property_readonly("rows", &Dataset::rows);

  py::class_<Moments>(m, "Moments")
      .def_readonly("x_second_moment", &Moments::x_second_moment)
      .def_readonly("u_covariance", &Moments::u_covariance)
      .def_readonly("sigma_u_sq", &Moments::sigma_u_sq);

  m.def("make_problem_setting", &make_problem_setting, py::arg("dims"), py::arg("seed"),
        py::arg("conditioning") = 1.0);
  m.def("example1_setting", &example1_setting, py::arg("r"), py::arg("sigma_sq") = 1.0);
  m.def("sample_dataset", &sample_dataset, py::arg("setting"), py::arg("n"),
        py::arg("origin"), py::arg("with_labels"), py::arg("with_latents"), py::arg("seed"));
  m.def("oracle_moments", &oracle_moments, py::arg("setting"), py::arg("origin"));
  m.def("randomize_ood_shift", &randomize_ood_shift, py::arg("setting"), py::arg("seed"),
        py::arg("scale_min"), py::arg("scale_max"), py::arg("mean_shift"));

  py::class_<LstSqSolution>(m, "LstSqSolution")
      .def_readonly("coefficients", &LstSqSolution::coefficients)
      .def_readonly("effective_rank", &LstSqSolution::effective_rank)
      .def_readonly("residual_norm", &LstSqSolution::residual_norm);
  py::class_<ReducedRankFit>(m, "ReducedRankFit")
      .def_readonly("a_hat", &ReducedRankFit::a_hat)
      .def_readonly("b_hat", &ReducedRankFit::b_hat);

  m.def("least_squares", &least_squares, py::arg("inputs"), py::arg("targets"));
  m.def("reduced_rank_regression", &reduced_rank_regression, py::arg("inputs"),
        py::arg("targets"), py::arg("rank"));
  m.def("principal_angles", &principal_angles, py::arg("rows_a"), py::arg("rows_b"));
  m.def("min_eigenvalue_sym", &min_eigenvalue_sym, py::arg("matrix"));
  m.def("min_singular_value", &min_singular_value, py::arg("matrix"));

  py::class_<LinearPredictor>(m, "LinearPredictor")
      .def(py::init<>())
      .def_readwrite("theta_x", &LinearPredictor::theta_x)
      .def_readwrite("theta_z", &LinearPredictor::theta_z)
      .def_readwrite("intercept", &LinearPredictor::intercept)
      .def("predict", &LinearPredictor::predict, py::arg("x"), py::arg("z"))
      .def("to_json", [](const LinearPredictor& p) { return to_json(p).dump(2); });
  py::class_<FeatureModel>(m, "FeatureModel")
      .def(py::init<>())
      .def_readwrite("b_hat", &FeatureModel::b_hat)
      .def_readwrite("theta_w_hat", &FeatureModel::theta_w_hat)
      .def("predict", &FeatureModel::predict, py::arg("x"))
      .def("ambient_coefficients", &FeatureModel::ambient_coefficients)
      .def("to_json", [](const FeatureModel& p) { return to_json(p).dump(2); });
  py::class_<InputOnFeatures>(m, "InputOnFeatures")
      .def_readonly("gamma_w", &InputOnFeatures::gamma_w)
      .def_readonly("gamma_z", &InputOnFeatures::gamma_z);

  m.def(
      "fit_baseline",
      [](const Dataset& d, bool fit_intercept) {
        return fit_baseline(d, FitOptions{fit_intercept});
      },
      py::arg("labeled"), py::arg("fit_intercept") = false);
  m.def(
      "fit_aux_inputs",
      [](const Dataset& d, bool fit_intercept) {
        return fit_aux_inputs(d, FitOptions{fit_intercept});
      },
      py::arg("labeled"), py::arg("fit_intercept") = false);
  m.def(
      "pretrain_aux_outputs",
      [](const std::vector<Dataset>& pool, Eigen::Index k) {
        return pretrain_aux_outputs(pool, k);
      },
      py::arg("unlabeled_pool"), py::arg("k"));
  m.def("transfer_aux_outputs", &transfer_aux_outputs, py::arg("b_hat"), py::arg("labeled"));
  m.def("fit_input_on_features", &fit_input_on_features, py::arg("b_hat"), py::arg("labeled"),
        py::arg("design") = PseudolabelDesign::Features);
  m.def(
      "fit_in_n_out",
      [](const Eigen::MatrixXd& b_hat, const Dataset& labeled, const Dataset& pool,
         double lambda, PseudolabelDesign design) {
        return fit_in_n_out(b_hat, labeled, pool, InNOutOptions{lambda, design});
      },
      py::arg("b_hat"), py::arg("labeled"), py::arg("id_unlabeled"),
      py::arg("lambda_") = 1.0, py::arg("design") = PseudolabelDesign::Features);
  py::class_<LambdaSelection>(m, "LambdaSelection")
      .def_readonly("lambda_", &LambdaSelection::lambda)
      .def_readonly("model", &LambdaSelection::model)
      .def_readonly("validation_risks", &LambdaSelection::validation_risks);
  m.def(
      "select_in_n_out_lambda",
      [](const Eigen::MatrixXd& b_hat, const Dataset& labeled, const Dataset& pool,
         const Dataset& validation, const std::vector<double>& grid,
         PseudolabelDesign design) {
        return select_in_n_out_lambda(b_hat, labeled, pool, validation, grid, design);
      },
      py::arg("b_hat"), py::arg("labeled"), py::arg("id_unlabeled"), py::arg("validation"),
      py::arg("grid") = std::vector<double>{},
      py::arg("design") = PseudolabelDesign::Features);
  m.def("in_n_out_population_head", &in_n_out_population_head, py::arg("gamma"),
        py::arg("a_star"));
  m.def("in_n_out_oracle_head", &in_n_out_oracle_head, py::arg("w"), py::arg("u"),
        py::arg("y"));

  py::class_<RiskReport>(m, "RiskReport")
      .def_readonly("risk", &RiskReport::risk)
      .def_readonly("bayes", &RiskReport::bayes)
      .def_readonly("excess", &RiskReport::excess)
      .def_readonly("x_term", &RiskReport::x_term)
      .def_readonly("u_term", &RiskReport::u_term)
      .def_readonly("noise_term", &RiskReport::noise_term)
      .def_readonly("origin", &RiskReport::origin)
      .def_readonly("method", &RiskReport::method)
      .def_property_readonly("mc_std_err", &report_std_err);

  m.def("analytic_risk",
        py::overload_cast<const LinearPredictor&, const ProblemSetting&, Origin>(
            &analytic_risk),
        py::arg("predictor"), py::arg("setting"), py::arg("origin"));
  m.def("analytic_risk",
        py::overload_cast<const FeatureModel&, const ProblemSetting&, Origin>(&analytic_risk),
        py::arg("predictor"), py::arg("setting"), py::arg("origin"));
  m.def("monte_carlo_risk",
        py::overload_cast<const LinearPredictor&, const ProblemSetting&, Origin, Eigen::Index,
                          std::uint64_t>(&monte_carlo_risk),
        py::arg("predictor"), py::arg("setting"), py::arg("origin"), py::arg("n_samples"),
        py::arg("seed"));
  m.def("monte_carlo_risk",
        py::overload_cast<const FeatureModel&, const ProblemSetting&, Origin, Eigen::Index,
                          std::uint64_t>(&monte_carlo_risk),
        py::arg("predictor"), py::arg("setting"), py::arg("origin"), py::arg("n_samples"),
        py::arg("seed"));
  m.def("bayes_risk", &bayes_risk, py::arg("setting"), py::arg("origin"),
        py::arg("predictor_class"));
  m.def("excess_risk_ratio", &excess_risk_ratio, py::arg("a"), py::arg("b"));

  py::class_<SuiteConfig>(m, "SuiteConfig")
      .def_readwrite("suite", &SuiteConfig::suite)
      .def_readwrite("dims", &SuiteConfig::dims)
      .def_readwrite("n_labeled", &SuiteConfig::n_labeled)
      .def_readwrite("m_id", &SuiteConfig::m_id)
      .def_readwrite("m_ood", &SuiteConfig::m_ood)
      .def_readwrite("trials", &SuiteConfig::trials)
      .def_readwrite("redraws", &SuiteConfig::redraws)
      .def_readwrite("base_seed", &SuiteConfig::base_seed)
      .def_readwrite("sigma_sq", &SuiteConfig::sigma_sq)
      .def_readwrite("target_sigma_u_sq", &SuiteConfig::target_sigma_u_sq)
      .def_readwrite("conditioning", &SuiteConfig::conditioning)
      .def_readwrite("sigma_grid", &SuiteConfig::sigma_grid)
      .def_readwrite("r_grid", &SuiteConfig::r_grid)
      .def_readwrite("pool_grid", &SuiteConfig::pool_grid)
      .def_readwrite("pool_check_trials", &SuiteConfig::pool_check_trials)
      .def_readwrite("pass_fraction", &SuiteConfig::pass_fraction)
      .def_readwrite("jobs", &SuiteConfig::jobs);

  py::class_<SuiteReport>(m, "SuiteReport")
      .def_readonly("suite", &SuiteReport::suite)
      .def_readonly("pass_flag", &SuiteReport::pass)
      .def_readonly("applicable", &SuiteReport::applicable)
      .def_readonly("columns", &SuiteReport::columns)
      .def_readonly("rows", &SuiteReport::rows)
      .def_readonly("aggregates", &SuiteReport::aggregates)
      .def_readonly("note", &SuiteReport::note);

  m.def("suite_names", [] { return suite_names(); });
  m.def("default_suite_config", &default_suite_config, py::arg("suite"));
  m.def("run_suite", &run_suite, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_suites",
      [](const std::vector<SuiteConfig>& configs, const std::string& out_dir) {
        const RunSuitesResult result = run_suites(configs, out_dir);
        return py::make_tuple(result.reports, result.exit_status);
      },
      py::arg("configs"), py::arg("out_dir") = std::string(),
      py::call_guard<py::gil_scoped_release>());
}
