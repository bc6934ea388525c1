#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fmix/estimation.hpp"

namespace fmix {

enum class Criterion { aic, bic };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& s);

struct DegreesOfFreedom {
  double fixed = 0.0;
  double random = 0.0;
  double total() const { return fixed + random + 1.0; }  // +1 for sigma2
};

/// Effective degrees of freedom as traces of the fixed- and random-effect
/// smoother matrices, computed block-wise through cyclic trace identities
/// (no N x N matrix is formed).
DegreesOfFreedom degrees_of_freedom(const AssembledModel& model);

/// Dense smoother matrices mapping y to the fitted fixed and random parts;
/// intended for diagnostics and tests (materializes N x N).
struct SmootherMatrices {
  MatrixXd a_eta;    // N x N
  MatrixXd a_gamma;  // N x N
  double df_fixed = 0.0;   // tr(a_eta)
  double df_random = 0.0;  // tr(a_gamma)
  double df_total() const { return df_fixed + df_random + 1.0; }
};

SmootherMatrices smoother_matrices(const AssembledModel& model);

/// -2 lik + 2 df (AIC) or -2 lik + log(N) df (BIC) with df = df_total of the
/// fit and lik the stored marginal log-likelihood.
double criterion_score(const ModelFit& fit, Criterion criterion);

struct SelectionOptions {
  Criterion criterion = Criterion::bic;
  /// Nelder-Mead iterations over (log10 lambda, log10 lambda_gamma).
  int simplex_budget = 100;
  double log10_lower = -8.0;
  double log10_upper = 12.0;
  double initial_step = 1.0;
  EmOptions em;
  /// Warm-start each EM refit from the previous evaluation's variance
  /// components (the final reported fit is recomputed from standard
  /// initialization either way).
  bool warm_start = true;
};

struct SelectionEvaluation {
  Smoothing sp;
  double value = 0.0;
};

struct SelectionResult {
  Smoothing best_sp;
  double criterion_value = 0.0;
  Criterion criterion = Criterion::bic;
  std::vector<SelectionEvaluation> trace;
};

/// Optimizes (lambda, lambda_gamma) in log space by Nelder-Mead, refitting
/// EM at every proposal and scoring by the requested criterion.
SelectionResult select(const GeneDataset& data, const SelectionOptions& opts = {});

}  // namespace fmix
