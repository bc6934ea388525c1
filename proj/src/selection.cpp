#include "fmix/selection.hpp"

#include <cmath>

#include "fmix/nelder_mead.hpp"

namespace fmix {

std::string to_string(Criterion c) { return c == Criterion::aic ? "AIC" : "BIC"; }

Criterion criterion_from_string(const std::string& s) {
  if (s == "AIC" || s == "aic") return Criterion::aic;
  if (s == "BIC" || s == "bic") return Criterion::bic;
  throw std::invalid_argument("unknown criterion: " + s);
}

DegreesOfFreedom degrees_of_freedom(const AssembledModel& model) {
  NormalEquations ne = normal_equations(model);
  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  const MatrixXd& dg = model.regularized_cov();

  DegreesOfFreedom df;
  // tr(A_eta) = tr((info + lambda G*)^{-1} info)
  df.fixed = ne.factor.solve(ne.info).trace();

  // tr(A_gamma) = tr(Xt Dg Xt' V^-1) - tr(Xt Dg Xt' V^-1 A_eta); both terms
  // reduce to M-sized blocks by the cyclic property of the trace.
  double t1 = 0.0;
  MatrixXd q = MatrixXd::Zero(3 * m, 3 * m);
  for (Index i = 0; i < n; ++i) {
    const MatrixXd& c = ne.xvx[static_cast<size_t>(i)];
    t1 += (dg * c).trace();
    // P_i = X_i' V_i^-1 X*_i = [c, s c, t c]; accumulate P_i' Dg P_i.
    const double s = model.gender_sign(i), t = model.age_sign(i);
    const MatrixXd cdc = c * dg * c;
    const double w[3] = {1.0, s, t};
    for (Index br = 0; br < 3; ++br)
      for (Index bc = 0; bc < 3; ++bc) q.block(br * m, bc * m, m, m) += w[br] * w[bc] * cdc;
  }
  df.random = t1 - ne.factor.solve(q).trace();
  return df;
}

SmootherMatrices smoother_matrices(const AssembledModel& model) {
  NormalEquations ne = normal_equations(model);
  const Index n_obs = model.num_observations();

  MatrixXd x_star = model.x_star();
  MatrixXd vinv_x(n_obs, x_star.cols());
  for (Index i = 0; i < model.num_individuals(); ++i) {
    const Index off = model.block_offset(i), ni = model.incidence(i).rows();
    vinv_x.middleRows(off, ni) = model.v_inverse(i) * x_star.middleRows(off, ni);
  }

  SmootherMatrices sm;
  sm.a_eta = x_star * ne.factor.solve(vinv_x.transpose());

  MatrixXd rest = MatrixXd::Identity(n_obs, n_obs) - sm.a_eta;
  sm.a_gamma.resize(n_obs, n_obs);
  const MatrixXd& dg = model.regularized_cov();
  for (Index i = 0; i < model.num_individuals(); ++i) {
    const auto& inc = model.incidence(i);
    const Index off = model.block_offset(i), ni = inc.rows();
    MatrixXd xdx(ni, ni);
    for (Index j = 0; j < ni; ++j)
      for (Index k = 0; k < ni; ++k) xdx(j, k) = dg(inc.col_of(j), inc.col_of(k));
    sm.a_gamma.middleRows(off, ni) =
        xdx * model.v_inverse(i) * rest.middleRows(off, ni);
  }
  sm.df_fixed = sm.a_eta.trace();
  sm.df_random = sm.a_gamma.trace();
  return sm;
}

double criterion_score(const ModelFit& fit, Criterion criterion) {
  const double n_obs = static_cast<double>(fit.fitted.size());
  const double penalty = criterion == Criterion::aic ? 2.0 : std::log(n_obs);
  return -2.0 * fit.loglik + penalty * fit.df_total();
}

SelectionResult select(const GeneDataset& data, const SelectionOptions& opts) {
  SelectionResult result;
  result.criterion = opts.criterion;

  auto clamp_point = [&](const Eigen::VectorXd& x) {
    Smoothing sp;
    sp.lambda = std::pow(10.0, std::clamp(x[0], opts.log10_lower, opts.log10_upper));
    sp.lambda_gamma = std::pow(10.0, std::clamp(x[1], opts.log10_lower, opts.log10_upper));
    return sp;
  };

  std::optional<VarianceComponents> warm;
  std::exception_ptr first_failure;
  bool any_success = false;

  auto objective = [&](const Eigen::VectorXd& x) {
    const Smoothing sp = clamp_point(x);
    EmOptions em = opts.em;
    if (opts.warm_start && warm) em.init = warm;
    try {
      ModelFit fit = fit_em(data, sp, em);
      if (opts.warm_start) warm = fit.vc;
      const double value = criterion_score(fit, opts.criterion);
      result.trace.push_back({sp, value});
      any_success = true;
      return value;
    } catch (...) {
      if (!first_failure) first_failure = std::current_exception();
      result.trace.push_back({sp, std::numeric_limits<double>::infinity()});
      return std::numeric_limits<double>::infinity();
    }
  };

  NelderMeadOptions nm;
  nm.max_iter = opts.simplex_budget;
  nm.initial_step = opts.initial_step;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  nelder_mead(objective, x0, nm);

  if (!any_success && first_failure) std::rethrow_exception(first_failure);
  size_t best = 0;
  for (size_t i = 1; i < result.trace.size(); ++i)
    if (result.trace[i].value < result.trace[best].value) best = i;
  result.best_sp = result.trace[best].sp;
  result.criterion_value = result.trace[best].value;
  return result;
}

}  // namespace fmix
