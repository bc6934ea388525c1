#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "fmix/spline_basis.hpp"

namespace fmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Gender { male, female };
enum class AgeGroup { young, old };

/// One individual's observed series for a single gene. Missing time points
/// are simply absent from obs_times; duplicate observations at a design
/// point are allowed.
struct IndividualSeries {
  std::string subject_id;
  Gender gender = Gender::female;
  AgeGroup age_group = AgeGroup::old;
  std::vector<double> obs_times;
  VectorXd values;

  Index n_obs() const { return values.size(); }
};

/// All observations for one response unit (gene/probe) on a common design
/// grid.
struct GeneDataset {
  std::string gene_id;
  TimeGrid grid;
  std::vector<IndividualSeries> individuals;

  Index total_observations() const {
    Index n = 0;
    for (const auto& ind : individuals) n += ind.n_obs();
    return n;
  }
};

/// Random-curve covariance at the design points plus the white-noise
/// variance of the error term.
struct VarianceComponents {
  MatrixXd D;
  double sigma2 = 1.0;
};

/// Penalty weights: `lambda` is shared by the three fixed-effect curves,
/// `lambda_gamma` by all random curves.
struct Smoothing {
  double lambda = 0.0;
  double lambda_gamma = 0.0;
};

/// Thrown when a factor has a single level in the data, making the
/// corresponding effect curve inestimable.
class InestimableEffectError : public std::runtime_error {
 public:
  InestimableEffectError(std::string factor_name, const std::string& what)
      : std::runtime_error(what), factor(std::move(factor_name)) {}
  std::string factor;
};

class SingularCovarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The stacked mixed-model structures for one gene. The incidence/sign
/// structure is fixed by the data; the covariance state (regularized
/// random-curve covariance and per-individual marginal covariances) depends
/// on the current variance components and smoothing parameters and can be
/// refreshed in place during EM.
///
/// All N x N quantities are handled block-wise per individual; the stacked
/// dense matrices are materialized only on demand for diagnostics and tests.
class AssembledModel {
 public:
  AssembledModel(const GeneDataset& data, VarianceComponents vc, Smoothing sp);

  Index num_individuals() const { return static_cast<Index>(incidence_.size()); }
  Index num_design_points() const { return grid_.size(); }
  Index num_observations() const { return y_.size(); }

  const TimeGrid& grid() const { return grid_; }
  const MatrixXd& roughness() const { return roughness_.G; }
  const VectorXd& y() const { return y_; }
  VectorXd y_block(Index i) const { return y_.segment(offset_[i], incidence_[i].rows()); }
  Index block_offset(Index i) const { return offset_[i]; }

  const IncidenceMatrix& incidence(Index i) const { return incidence_[i]; }
  /// +1 for female, -1 for male.
  double gender_sign(Index i) const { return gender_sign_[i]; }
  /// +1 for old, -1 for young.
  double age_sign(Index i) const { return age_sign_[i]; }

  const VarianceComponents& variance_components() const { return vc_; }
  const Smoothing& smoothing() const { return sp_; }

  /// (D^{-1} + lambda_gamma G)^{-1}; equals D exactly when lambda_gamma = 0.
  const MatrixXd& regularized_cov() const { return d_gamma_; }
  /// Inverse of V_i = X_i D_gamma X_i^T + sigma2 I.
  const MatrixXd& v_inverse(Index i) const { return v_inv_[i]; }
  double logdet_v(Index i) const { return logdet_v_[i]; }
  /// True when D needed a ridge before inversion.
  bool ridge_applied() const { return ridge_applied_; }

  /// Recomputes the covariance state for new variance components / smoothing
  /// parameters, keeping the incidence structure.
  void update_covariances(VarianceComponents vc, Smoothing sp);

  // Dense per-individual blocks (for tests and whole-matrix diagnostics).
  MatrixXd x_block(Index i) const { return incidence_[i].dense(); }
  MatrixXd w_block(Index i) const { return gender_sign_[i] * incidence_[i].dense(); }
  MatrixXd z_block(Index i) const { return age_sign_[i] * incidence_[i].dense(); }
  MatrixXd x_star_block(Index i) const;

  // Dense stacked matrices.
  MatrixXd x_star() const;   // N x 3M
  MatrixXd x_tilde() const;  // N x nM, block diagonal
  MatrixXd g_star() const;   // 3M x 3M, G repeated on the diagonal
  MatrixXd g_tilde() const;  // nM x nM
  MatrixXd v_dense() const;  // N x N, block diagonal

 private:
  TimeGrid grid_;
  Roughness roughness_;
  std::vector<IncidenceMatrix> incidence_;
  VectorXd gender_sign_, age_sign_;
  VectorXd y_;
  std::vector<Index> offset_;

  VarianceComponents vc_;
  Smoothing sp_;
  MatrixXd d_gamma_;
  std::vector<MatrixXd> v_inv_;
  std::vector<double> logdet_v_;
  bool ridge_applied_ = false;
};

/// Builds the stacked model for one gene.
AssembledModel assemble(const GeneDataset& data, VarianceComponents vc, Smoothing sp);

/// Generalized log-likelihood criterion: the joint -2 log-likelihood of
/// (y, gamma) up to an additive constant, using the unregularized D and
/// R = sigma2 I. eta is the stacked (mu, alpha, beta) vector of length 3M,
/// gamma the stacked random curves of length nM.
double gll(const AssembledModel& model, const VectorXd& eta, const VectorXd& gamma);

/// gll plus the roughness penalties lambda_gamma * gamma' Gt gamma and
/// lambda * eta' G* eta.
double pgll(const AssembledModel& model, const VectorXd& eta, const VectorXd& gamma,
            const Smoothing& sp);

}  // namespace fmix
