#include "fmix/estimation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmix/selection.hpp"

namespace fmix {

namespace {

constexpr double kSigma2Floor = 1e-12;

// Basis of the penalty null space: per fixed-effect block, the constant and
// the linear-in-time vectors. Used to detect directions that neither the
// penalty nor the data pin down.
MatrixXd penalty_null_basis(const AssembledModel& model) {
  const Index m = model.num_design_points();
  MatrixXd z = MatrixXd::Zero(3 * m, 6);
  VectorXd t = model.grid().points();
  VectorXd tn = (t.array() - t.mean()) / std::max(1.0, t.norm());
  for (Index b = 0; b < 3; ++b) {
    z.block(b * m, 2 * b, m, 1).setConstant(1.0 / std::sqrt(double(m)));
    z.block(b * m, 2 * b + 1, m, 1) = tn / tn.norm();
  }
  return z;
}

}  // namespace

NormalEquations normal_equations(const AssembledModel& model) {
  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  NormalEquations ne;
  ne.xvx.resize(static_cast<size_t>(n));
  ne.xvy.resize(static_cast<size_t>(n));

  MatrixXd sum_c = MatrixXd::Zero(m, m), sum_sc = MatrixXd::Zero(m, m),
           sum_tc = MatrixXd::Zero(m, m), sum_stc = MatrixXd::Zero(m, m);
  VectorXd sum_g = VectorXd::Zero(m), sum_sg = VectorXd::Zero(m), sum_tg = VectorXd::Zero(m);

  for (Index i = 0; i < n; ++i) {
    const auto& inc = model.incidence(i);
    const MatrixXd& vinv = model.v_inverse(i);
    const Index ni = inc.rows();
    MatrixXd c = MatrixXd::Zero(m, m);
    for (Index j = 0; j < ni; ++j)
      for (Index k = 0; k < ni; ++k) c(inc.col_of(j), inc.col_of(k)) += vinv(j, k);
    VectorXd g = inc.scatter((vinv * model.y_block(i)).eval());
    ne.xvx[static_cast<size_t>(i)] = c;
    ne.xvy[static_cast<size_t>(i)] = g;
    const double s = model.gender_sign(i), t = model.age_sign(i);
    sum_c += c;
    sum_sc += s * c;
    sum_tc += t * c;
    sum_stc += (s * t) * c;
    sum_g += g;
    sum_sg += s * g;
    sum_tg += t * g;
  }

  ne.info.resize(3 * m, 3 * m);
  ne.info << sum_c, sum_sc, sum_tc, sum_sc, sum_c, sum_stc, sum_tc, sum_stc, sum_c;
  ne.rhs.resize(3 * m);
  ne.rhs << sum_g, sum_sg, sum_tg;

  const double lambda = model.smoothing().lambda;
  ne.penalized = ne.info;
  for (Index b = 0; b < 3; ++b)
    ne.penalized.block(b * m, b * m, m, m) += lambda * model.roughness();

  // Rank check. With lambda > 0 the only possible singular directions live in
  // the penalty null space; test the information matrix restricted there.
  if (lambda > 0) {
    MatrixXd z = penalty_null_basis(model);
    MatrixXd q = z.transpose() * ne.info * z;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(q);
    if (es.eigenvalues().minCoeff() < 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw RankDeficiencyError(
          "normal_equations: unpenalized direction not estimable from the data");
  }
  ne.factor.compute(ne.penalized);
  if (lambda == 0) {
    const auto& d = ne.factor.vectorD();
    if ((d.array() < 1e-12 * std::max(1e-300, d.maxCoeff())).any())
      throw RankDeficiencyError("normal_equations: X*' V^-1 X* is rank deficient");
  }
  return ne;
}

VectorXd solve_gamma(const AssembledModel& model, const VectorXd& eta) {
  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);
  VectorXd gamma(n * m);
  for (Index i = 0; i < n; ++i) {
    const VectorXd curve = mu + model.gender_sign(i) * alpha + model.age_sign(i) * beta;
    const VectorXd resid = model.y_block(i) - model.incidence(i).gather(curve);
    gamma.segment(i * m, m) =
        model.regularized_cov() * model.incidence(i).scatter((model.v_inverse(i) * resid).eval());
  }
  return gamma;
}

CurveEstimates blup(const AssembledModel& model) {
  NormalEquations ne = normal_equations(model);
  CurveEstimates est;
  est.eta = ne.factor.solve(ne.rhs);
  est.gamma = solve_gamma(model, est.eta);
  return est;
}

double marginal_loglik(const AssembledModel& model, const VectorXd& eta) {
  const Index m = model.num_design_points();
  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);
  double quad = 0.0, logdet = 0.0;
  for (Index i = 0; i < model.num_individuals(); ++i) {
    const VectorXd curve = mu + model.gender_sign(i) * alpha + model.age_sign(i) * beta;
    const VectorXd resid = model.y_block(i) - model.incidence(i).gather(curve);
    quad += resid.dot(model.v_inverse(i) * resid);
    logdet += model.logdet_v(i);
  }
  const double n_obs = static_cast<double>(model.num_observations());
  return -0.5 * (n_obs * std::log(2.0 * M_PI) + logdet + quad);
}

ConditionalMoments e_step(const AssembledModel& model, const VectorXd& eta) {
  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  const MatrixXd& dg = model.regularized_cov();
  const double sigma2 = model.variance_components().sigma2;
  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);

  ConditionalMoments out;
  out.gamma_outer.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& inc = model.incidence(i);
    const MatrixXd& vinv = model.v_inverse(i);
    const Index ni = inc.rows();
    const VectorXd curve = mu + model.gender_sign(i) * alpha + model.age_sign(i) * beta;
    const VectorXd resid = model.y_block(i) - inc.gather(curve);
    const VectorXd gamma_i = dg * inc.scatter((vinv * resid).eval());

    MatrixXd c = MatrixXd::Zero(m, m);
    for (Index j = 0; j < ni; ++j)
      for (Index k = 0; k < ni; ++k) c(inc.col_of(j), inc.col_of(k)) += vinv(j, k);

    out.gamma_outer[static_cast<size_t>(i)] =
        gamma_i * gamma_i.transpose() + dg - dg * c * dg;

    const VectorXd eps = resid - inc.gather(gamma_i);
    out.resid_squared +=
        eps.squaredNorm() + sigma2 * (static_cast<double>(ni) - sigma2 * vinv.trace());
  }
  return out;
}

MStepResult m_step(const std::vector<MatrixXd>& gamma_outer, double resid_squared, Index n_obs) {
  if (gamma_outer.empty()) throw std::invalid_argument("m_step: no individuals");
  MStepResult out;
  MatrixXd d = MatrixXd::Zero(gamma_outer.front().rows(), gamma_outer.front().cols());
  for (const auto& egg : gamma_outer) d += egg;
  d /= static_cast<double>(gamma_outer.size());
  out.vc.D = (d + d.transpose()) / 2.0;
  out.vc.sigma2 = resid_squared / static_cast<double>(n_obs);
  if (!(out.vc.sigma2 > kSigma2Floor)) {
    out.vc.sigma2 = kSigma2Floor;
    out.sigma2_floored = true;
  }
  return out;
}

VarianceComponents initial_variance_components(const GeneDataset& data) {
  // Noise proxy: variance of successive within-individual differences is
  // 2 sigma2 plus curve variation, so halve it.
  std::vector<double> diffs;
  std::vector<double> means;
  double all_sum = 0.0, all_sq = 0.0;
  Index all_n = 0;
  for (const auto& ind : data.individuals) {
    std::vector<Index> order(static_cast<size_t>(ind.n_obs()));
    std::iota(order.begin(), order.end(), Index(0));
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      return ind.obs_times[static_cast<size_t>(a)] < ind.obs_times[static_cast<size_t>(b)];
    });
    for (size_t j = 1; j < order.size(); ++j)
      diffs.push_back(ind.values[order[j]] - ind.values[order[j - 1]]);
    means.push_back(ind.values.mean());
    all_sum += ind.values.sum();
    all_sq += ind.values.squaredNorm();
    all_n += ind.n_obs();
  }
  auto sample_var = [](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
  };
  double sigma2 = sample_var(diffs) / 2.0;
  if (!(sigma2 > 0)) {
    const double mean = all_sum / static_cast<double>(all_n);
    sigma2 = (all_sq / static_cast<double>(all_n) - mean * mean) / 2.0;
  }
  sigma2 = std::max(sigma2, 1e-8);
  double s2 = sample_var(means);
  s2 = std::max({s2, 1e-3 * sigma2, kSigma2Floor});
  VarianceComponents vc;
  vc.sigma2 = sigma2;
  vc.D = s2 * MatrixXd::Identity(data.grid.size(), data.grid.size());
  return vc;
}

ModelFit fit_em(const GeneDataset& data, Smoothing sp, const EmOptions& opts) {
  VarianceComponents vc = opts.init ? *opts.init : initial_variance_components(data);
  AssembledModel model(data, std::move(vc), sp);

  ModelFit fit;
  fit.gene_id = data.gene_id;
  fit.grid = data.grid;
  fit.sp = sp;

  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  int iter = 0;
  bool converged = false;
  VectorXd eta;
  while (iter < opts.max_iter) {
    ++iter;
    NormalEquations ne = normal_equations(model);
    eta = ne.factor.solve(ne.rhs);
    fit.loglik_trace.push_back(marginal_loglik(model, eta));
    ConditionalMoments moments = e_step(model, eta);
    MStepResult ms = m_step(moments.gamma_outer, moments.resid_squared,
                            model.num_observations());
    fit.sigma2_floored = fit.sigma2_floored || ms.sigma2_floored;

    const auto& prev = model.variance_components();
    const double scale = std::max({ms.vc.sigma2, ms.vc.D.cwiseAbs().maxCoeff(), 1e-300});
    const double delta = std::max((ms.vc.D - prev.D).cwiseAbs().maxCoeff(),
                                  std::abs(ms.vc.sigma2 - prev.sigma2)) /
                         scale;
    model.update_covariances(std::move(ms.vc), sp);
    if (delta < opts.tol) {
      converged = true;
      break;
    }
  }

  NormalEquations ne = normal_equations(model);
  eta = ne.factor.solve(ne.rhs);
  VectorXd gamma = solve_gamma(model, eta);

  fit.mu = eta.segment(0, m);
  fit.alpha = eta.segment(m, m);
  fit.beta = eta.segment(2 * m, m);
  fit.gamma.resize(n, m);
  for (Index i = 0; i < n; ++i) fit.gamma.row(i) = gamma.segment(i * m, m).transpose();
  fit.vc = model.variance_components();
  fit.em_iterations = iter;
  fit.converged = converged;
  fit.ridge_applied = model.ridge_applied();
  fit.loglik = marginal_loglik(model, eta);

  fit.fitted.resize(model.num_observations());
  for (Index i = 0; i < n; ++i) {
    const VectorXd curve = fit.mu + model.gender_sign(i) * fit.alpha +
                           model.age_sign(i) * fit.beta + fit.gamma.row(i).transpose();
    fit.fitted.segment(model.block_offset(i), model.incidence(i).rows()) =
        model.incidence(i).gather(curve);
  }
  fit.residuals = model.y() - fit.fitted;

  DegreesOfFreedom df = degrees_of_freedom(model);
  fit.df_fixed = df.fixed;
  fit.df_random = df.random;
  return fit;
}

}  // namespace fmix
