#include "auxshift/problem.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "auxshift/rng.hpp"

namespace auxshift {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Gaussian ensemble draw with singular values clamped into
/// [1/conditioning, conditioning]; guarantees full rank with margin.
Eigen::MatrixXd clamped_random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                                      double conditioning) {
  Eigen::MatrixXd g = rng.normal_matrix(rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  const double lo = 1.0 / conditioning;
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::clamp(s[i], lo, conditioning);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Eigen::Index rank_of(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double cutoff =
      static_cast<double>(std::max(m.rows(), m.cols())) *
      std::numeric_limits<double>::epsilon() * s[0];
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cutoff) ++r;
  return r;
}

/// One row from the distribution, appended column-wise into out.row(i).
void sample_rows(const DistributionSpec& spec, Eigen::MatrixXd& out, Rng& rng) {
  const Eigen::Index n = out.rows();
  const Eigen::Index p = out.cols();
  switch (spec.family) {
    case DistFamily::Gaussian: {
      const Eigen::MatrixXd chol = spec.covariance.llt().matrixL();
      for (Eigen::Index i = 0; i < n; ++i)
        out.row(i) = (spec.mean + chol * rng.normal_vector(p)).transpose();
      break;
    }
    case DistFamily::UniformBox: {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
          out(i, j) = spec.mean[j] + spec.half_width[j] * rng.uniform(-1.0, 1.0);
      break;
    }
    case DistFamily::UniformBall: {
      // Normalized Gaussian direction times U^(1/p)-distributed radius;
      // exact, no rejection loop.
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd dir = rng.normal_vector(p);
        const double norm = dir.norm();
        if (norm > 0.0) dir /= norm;
        const double mag =
            spec.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
        out.row(i) = (spec.mean + mag * dir).transpose();
      }
      break;
    }
  }
}

}  // namespace

std::string to_string(DistFamily f) {
  switch (f) {
    case DistFamily::Gaussian: return "gaussian";
    case DistFamily::UniformBox: return "uniform-box";
    case DistFamily::UniformBall: return "uniform-ball";
  }
  return "?";
}

std::string to_string(Origin o) { return o == Origin::Id ? "id" : "ood"; }

void Dims::validate() const {
  require(d >= 1 && k >= 1 && m >= 1 && T >= 1, "Dims: all dimensions must be positive");
  require(k <= d, "Dims: k must not exceed d");
  require(T >= k, "Dims: T must be at least k");
  require(T >= m, "Dims: T must be at least m");
}

DistributionSpec DistributionSpec::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  DistributionSpec s;
  s.family = DistFamily::Gaussian;
  s.mean = std::move(mean);
  s.covariance = std::move(covariance);
  s.validate();
  return s;
}

DistributionSpec DistributionSpec::uniform_box(Eigen::VectorXd mean, Eigen::VectorXd half_width) {
  DistributionSpec s;
  s.family = DistFamily::UniformBox;
  s.mean = std::move(mean);
  s.half_width = std::move(half_width);
  s.validate();
  return s;
}

DistributionSpec DistributionSpec::uniform_ball(Eigen::VectorXd mean, double radius, int dim) {
  DistributionSpec s;
  s.family = DistFamily::UniformBall;
  s.mean = std::move(mean);
  s.radius = radius;
  require(s.mean.size() == dim, "uniform_ball: mean dimension mismatch");
  s.validate();
  return s;
}

Eigen::MatrixXd DistributionSpec::covariance_matrix() const {
  const Eigen::Index p = mean.size();
  switch (family) {
    case DistFamily::Gaussian:
      return covariance;
    case DistFamily::UniformBox:
      // Var(Uniform(-h, h)) = h^2 / 3 per coordinate, independent.
      return (half_width.array().square() / 3.0).matrix().asDiagonal();
    case DistFamily::UniformBall:
      // Uniform on the radius-r ball in R^p: Cov = r^2 / (p + 2) * I.
      return (radius * radius / static_cast<double>(p + 2)) *
             Eigen::MatrixXd::Identity(p, p);
  }
  throw std::invalid_argument("unsupported distribution family");
}

Eigen::MatrixXd DistributionSpec::second_moment() const {
  return covariance_matrix() + mean * mean.transpose();
}

void DistributionSpec::validate() const {
  require(mean.size() >= 1, "DistributionSpec: empty mean");
  switch (family) {
    case DistFamily::Gaussian: {
      require(covariance.rows() == mean.size() && covariance.cols() == mean.size(),
              "DistributionSpec: covariance shape mismatch");
      const double scale = covariance.cwiseAbs().maxCoeff();
      require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <=
                  1e-10 * std::max(scale, 1.0),
              "DistributionSpec: covariance not symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
      require(es.eigenvalues().minCoeff() > 0.0,
              "DistributionSpec: covariance must be positive definite");
      break;
    }
    case DistFamily::UniformBox:
      require(half_width.size() == mean.size(),
              "DistributionSpec: half_width shape mismatch");
      require((half_width.array() > 0.0).all(),
              "DistributionSpec: half-widths must be positive");
      break;
    case DistFamily::UniformBall:
      require(radius > 0.0, "DistributionSpec: radius must be positive");
      break;
  }
}

void ProblemSetting::validate() const {
  dims.validate();
  require(a_star.rows() == dims.T && a_star.cols() == dims.k, "ProblemSetting: A* shape");
  require(b_star.rows() == dims.k && b_star.cols() == dims.d, "ProblemSetting: B* shape");
  require(c_star.rows() == dims.T && c_star.cols() == dims.m, "ProblemSetting: C* shape");
  require(theta_w.size() == dims.k, "ProblemSetting: theta_w size");
  require(theta_u.size() == dims.m, "ProblemSetting: theta_u size");
  require(sigma_sq >= 0.0, "ProblemSetting: sigma_sq must be nonnegative");
  require(rank_of(a_star) == dims.k, "ProblemSetting: A* must have rank k");
  require(rank_of(b_star) == dims.k, "ProblemSetting: B* must have rank k");
  require(rank_of(c_star) == dims.m, "ProblemSetting: C* must have rank m");
  p_x.validate();
  p_u.validate();
  p_x_ood.validate();
  p_u_ood.validate();
  require(p_x.dim() == dims.d && p_x_ood.dim() == dims.d, "ProblemSetting: p_x dimension");
  require(p_u.dim() == dims.m && p_u_ood.dim() == dims.m, "ProblemSetting: p_u dimension");
  require(p_u.mean.isZero(0.0) && p_u_ood.mean.isZero(0.0),
          "ProblemSetting: u must be zero-mean in- and out-of-distribution");
}

ProblemSetting make_problem_setting(const Dims& dims, std::uint64_t seed, double conditioning) {
  dims.validate();
  require(conditioning >= 1.0, "make_problem_setting: conditioning must be >= 1");
  Rng rng(mix64(seed ^ hash_label("problem-setting")));

  ProblemSetting s;
  s.dims = dims;
  s.a_star = clamped_random_matrix(dims.T, dims.k, rng, conditioning);
  s.b_star = clamped_random_matrix(dims.k, dims.d, rng, conditioning);
  s.c_star = clamped_random_matrix(dims.T, dims.m, rng, conditioning);
  s.theta_w = rng.normal_vector(dims.k);
  s.theta_u = rng.normal_vector(dims.m);
  s.sigma_sq = 1.0;
  s.p_x = DistributionSpec::gaussian(Eigen::VectorXd::Zero(dims.d),
                                     Eigen::MatrixXd::Identity(dims.d, dims.d));
  s.p_u = DistributionSpec::gaussian(Eigen::VectorXd::Zero(dims.m),
                                     Eigen::MatrixXd::Identity(dims.m, dims.m));
  s.p_x_ood = s.p_x;
  s.p_u_ood = s.p_u;
  s.validate();
  return s;
}

ProblemSetting example1_setting(double R, double sigma_sq) {
  require(R > 0.0, "example1_setting: R must be positive");
  ProblemSetting s;
  s.dims = Dims{1, 1, 2, 2};
  s.b_star = Eigen::MatrixXd::Constant(1, 1, 1.0);
  s.a_star = Eigen::MatrixXd(2, 1);
  s.a_star << 1.0, 0.0;
  s.c_star = Eigen::MatrixXd::Identity(2, 2);
  s.theta_w = Eigen::VectorXd::Constant(1, 1.0);
  s.theta_u = Eigen::VectorXd(2);
  s.theta_u << 1.0, 0.0;
  s.sigma_sq = sigma_sq;
  s.p_x = DistributionSpec::uniform_box(Eigen::VectorXd::Zero(1),
                                        Eigen::VectorXd::Constant(1, 1.0));
  s.p_x_ood = s.p_x;
  s.p_u = DistributionSpec::uniform_ball(Eigen::VectorXd::Zero(2), 1.0, 2);
  Eigen::VectorXd hw(2);
  hw << 1.0, R;
  s.p_u_ood = DistributionSpec::uniform_box(Eigen::VectorXd::Zero(2), hw);
  s.validate();
  return s;
}

Dataset sample_dataset(const ProblemSetting& setting, Eigen::Index n, Origin origin,
                       bool with_labels, bool with_latents, std::uint64_t seed) {
  require(n >= 1, "sample_dataset: n must be at least 1");
  Rng rng(mix64(seed ^ hash_label("dataset")));

  Dataset data;
  data.origin = origin;
  data.x.resize(n, setting.dims.d);
  sample_rows(setting.x_dist(origin), data.x, rng);
  Eigen::MatrixXd u(n, setting.dims.m);
  sample_rows(setting.u_dist(origin), u, rng);

  data.z = data.x * setting.b_star.transpose() * setting.a_star.transpose() +
           u * setting.c_star.transpose();
  if (with_labels) {
    const double sigma = std::sqrt(setting.sigma_sq);
    Eigen::VectorXd eps(n);
    if (setting.noise_family == NoiseFamily::Gaussian) {
      for (Eigen::Index i = 0; i < n; ++i) eps[i] = sigma * rng.normal();
    } else {
      // Uniform noise with the same variance: half-width sqrt(3) * sigma.
      const double h = std::sqrt(3.0) * sigma;
      for (Eigen::Index i = 0; i < n; ++i) eps[i] = h * rng.uniform(-1.0, 1.0);
    }
    data.y = data.x * setting.theta_x_star() + u * setting.theta_u + eps;
  }
  if (with_latents) data.u = std::move(u);
  return data;
}

Moments oracle_moments(const ProblemSetting& setting, Origin origin) {
  Moments m;
  m.x_second_moment = setting.x_dist(origin).second_moment();
  m.u_covariance = setting.u_dist(origin).covariance_matrix();
  m.sigma_u_sq = setting.theta_u.dot(m.u_covariance * setting.theta_u);
  return m;
}

}  // namespace auxshift
