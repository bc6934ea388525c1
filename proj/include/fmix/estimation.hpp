#pragma once

#include <Eigen/Cholesky>

#include <optional>
#include <vector>

#include "fmix/model.hpp"

namespace fmix {

class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accumulated normal-equation blocks for the penalized GLS solve. Everything
/// is built per individual so no N x N matrix is ever formed.
struct NormalEquations {
  MatrixXd info;                 // X*' V^-1 X*   (3M x 3M)
  VectorXd rhs;                  // X*' V^-1 y    (3M)
  std::vector<MatrixXd> xvx;     // per individual X' V^-1 X   (M x M)
  std::vector<VectorXd> xvy;     // per individual X' V^-1 y   (M)
  MatrixXd penalized;            // info + lambda G*
  Eigen::LDLT<MatrixXd> factor;  // factorization of `penalized`
};

/// Builds the normal equations for the model's current covariance state and
/// factorizes the penalized system. Throws RankDeficiencyError when the
/// system is singular (an unpenalized direction unsupported by the data).
NormalEquations normal_equations(const AssembledModel& model);

struct CurveEstimates {
  VectorXd eta;    // stacked (mu, alpha, beta), length 3M
  VectorXd gamma;  // stacked random curves, length nM
};

/// Penalized BLUE/BLUP of the fixed- and random-effect curves at the current
/// variance components; jointly they minimize the penalized criterion.
CurveEstimates blup(const AssembledModel& model);

/// Random-curve estimates for a given eta: gamma_i = D_gamma X_i' V_i^{-1}
/// (y_i - X*_i eta).
VectorXd solve_gamma(const AssembledModel& model, const VectorXd& eta);

/// Marginal Gaussian log-likelihood of y under N(X* eta, V) with the model's
/// current (regularized) V.
double marginal_loglik(const AssembledModel& model, const VectorXd& eta);

/// Conditional expectations of the variance-component sufficient statistics
/// given the data, at the current covariance state.
struct ConditionalMoments {
  std::vector<MatrixXd> gamma_outer;  // E[gamma_i gamma_i' | y], M x M each
  double resid_squared = 0.0;         // E[eps' eps | y]
};

ConditionalMoments e_step(const AssembledModel& model, const VectorXd& eta);

struct MStepResult {
  VarianceComponents vc;
  bool sigma2_floored = false;
};

/// Maximum-likelihood update of (D, sigma2) from the conditional moments;
/// sigma2 is floored at 1e-12 if the numerical estimate is non-positive.
MStepResult m_step(const std::vector<MatrixXd>& gamma_outer, double resid_squared, Index n_obs);

struct EmOptions {
  double tol = 1e-6;
  int max_iter = 200;
  /// Optional warm start; when absent, scale-aware defaults are derived from
  /// the data.
  std::optional<VarianceComponents> init;
};

/// Result of one gene's fit at fixed smoothing parameters.
struct ModelFit {
  std::string gene_id;
  TimeGrid grid;
  VectorXd mu, alpha, beta;  // fixed-effect curves at the design points
  MatrixXd gamma;            // n x M random curves
  VarianceComponents vc;
  Smoothing sp;
  double df_fixed = 0.0, df_random = 0.0;
  double df_total() const { return df_fixed + df_random + 1.0; }
  double loglik = 0.0;
  VectorXd fitted, residuals;
  int em_iterations = 0;
  bool converged = false;
  bool sigma2_floored = false;
  bool ridge_applied = false;
  std::vector<double> loglik_trace;  // marginal log-likelihood per EM iteration
};

/// Scale-aware starting values: sigma2 from within-individual first
/// differences, D from the spread of per-individual means.
VarianceComponents initial_variance_components(const GeneDataset& data);

/// Fits one gene by EM over the variance components, alternating with the
/// penalized GLS solve for the curves. Convergence is declared on the
/// variance components only.
ModelFit fit_em(const GeneDataset& data, Smoothing sp, const EmOptions& opts = {});

}  // namespace fmix
