#include "fmix/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace fmix {

namespace {

void validate(const GeneDataset& data) {
  if (data.individuals.size() < 2)
    throw std::invalid_argument("assemble: need at least 2 individuals, gene " + data.gene_id);
  bool any_male = false, any_female = false, any_young = false, any_old = false;
  for (const auto& ind : data.individuals) {
    if (ind.n_obs() < 1)
      throw std::invalid_argument("assemble: individual without observations, subject " +
                                  ind.subject_id);
    if (static_cast<Index>(ind.obs_times.size()) != ind.values.size())
      throw std::invalid_argument("assemble: times/values length mismatch, subject " +
                                  ind.subject_id);
    (ind.gender == Gender::male ? any_male : any_female) = true;
    (ind.age_group == AgeGroup::young ? any_young : any_old) = true;
  }
  if (!any_male || !any_female)
    throw InestimableEffectError(
        "gender", "assemble: gender effect inestimable, all individuals share one gender (gene " +
                      data.gene_id + ")");
  if (!any_young || !any_old)
    throw InestimableEffectError(
        "age_group", "assemble: age effect inestimable, all individuals share one age group (gene " +
                         data.gene_id + ")");
}

}  // namespace

AssembledModel::AssembledModel(const GeneDataset& data, VarianceComponents vc, Smoothing sp)
    : grid_(data.grid), roughness_(build_roughness(grid_)) {
  validate(data);
  const Index n = static_cast<Index>(data.individuals.size());
  gender_sign_.resize(n);
  age_sign_.resize(n);
  incidence_.reserve(n);
  y_.resize(data.total_observations());
  offset_.resize(n);
  Index pos = 0;
  for (Index i = 0; i < n; ++i) {
    const auto& ind = data.individuals[i];
    incidence_.push_back(build_incidence(grid_, ind.obs_times));
    gender_sign_[i] = ind.gender == Gender::female ? 1.0 : -1.0;
    age_sign_[i] = ind.age_group == AgeGroup::old ? 1.0 : -1.0;
    offset_[i] = pos;
    y_.segment(pos, ind.n_obs()) = ind.values;
    pos += ind.n_obs();
  }
  update_covariances(std::move(vc), sp);
}

void AssembledModel::update_covariances(VarianceComponents vc, Smoothing sp) {
  const Index m = grid_.size();
  if (vc.D.rows() != m || vc.D.cols() != m)
    throw std::invalid_argument("update_covariances: D must be M x M");
  if (!(vc.sigma2 > 0) || !std::isfinite(vc.sigma2))
    throw std::invalid_argument("update_covariances: sigma2 must be positive and finite");
  if (!(sp.lambda >= 0) || !(sp.lambda_gamma >= 0) || !std::isfinite(sp.lambda) ||
      !std::isfinite(sp.lambda_gamma))
    throw std::invalid_argument("update_covariances: smoothing parameters must be >= 0 and finite");
  vc_ = std::move(vc);
  sp_ = sp;
  ridge_applied_ = false;

  if (sp_.lambda_gamma == 0.0) {
    d_gamma_ = vc_.D;  // regularizer vanishes
  } else {
    const double scale = vc_.D.trace() / static_cast<double>(m);
    if (!(scale > 0))
      throw SingularCovarianceError("update_covariances: D has non-positive trace");
    MatrixXd d = vc_.D;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(d);
    if (es.eigenvalues().minCoeff() < 1e-10 * scale) {
      d += 1e-8 * scale * MatrixXd::Identity(m, m);
      ridge_applied_ = true;
      if (Eigen::SelfAdjointEigenSolver<MatrixXd>(d).eigenvalues().minCoeff() <= 0)
        throw SingularCovarianceError("update_covariances: D singular beyond ridge tolerance");
    }
    Eigen::LDLT<MatrixXd> ldlt(d);
    MatrixXd d_inv = ldlt.solve(MatrixXd::Identity(m, m));
    MatrixXd precision = d_inv + sp_.lambda_gamma * roughness_.G;
    Eigen::LDLT<MatrixXd> pldlt(precision);
    if (pldlt.info() != Eigen::Success)
      throw SingularCovarianceError("update_covariances: regularized precision not factorizable");
    d_gamma_ = pldlt.solve(MatrixXd::Identity(m, m));
    d_gamma_ = ((d_gamma_ + d_gamma_.transpose()) / 2).eval();
  }

  const Index n = num_individuals();
  v_inv_.assign(static_cast<size_t>(n), MatrixXd());
  logdet_v_.assign(static_cast<size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    const auto& inc = incidence_[i];
    const Index ni = inc.rows();
    MatrixXd v(ni, ni);
    for (Index j = 0; j < ni; ++j)
      for (Index k = 0; k < ni; ++k) v(j, k) = d_gamma_(inc.col_of(j), inc.col_of(k));
    v.diagonal().array() += vc_.sigma2;
    Eigen::LLT<MatrixXd> llt(v);
    if (llt.info() != Eigen::Success)
      throw SingularCovarianceError("update_covariances: V_i not positive definite");
    v_inv_[i] = llt.solve(MatrixXd::Identity(ni, ni));
    logdet_v_[i] = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
}

MatrixXd AssembledModel::x_star_block(Index i) const {
  const Index m = grid_.size();
  MatrixXd x = incidence_[i].dense();
  MatrixXd out(x.rows(), 3 * m);
  out << x, gender_sign_[i] * x, age_sign_[i] * x;
  return out;
}

MatrixXd AssembledModel::x_star() const {
  MatrixXd out(num_observations(), 3 * grid_.size());
  for (Index i = 0; i < num_individuals(); ++i)
    out.middleRows(offset_[i], incidence_[i].rows()) = x_star_block(i);
  return out;
}

MatrixXd AssembledModel::x_tilde() const {
  const Index m = grid_.size();
  MatrixXd out = MatrixXd::Zero(num_observations(), num_individuals() * m);
  for (Index i = 0; i < num_individuals(); ++i)
    out.block(offset_[i], i * m, incidence_[i].rows(), m) = incidence_[i].dense();
  return out;
}

MatrixXd AssembledModel::g_star() const {
  const Index m = grid_.size();
  MatrixXd out = MatrixXd::Zero(3 * m, 3 * m);
  for (Index b = 0; b < 3; ++b) out.block(b * m, b * m, m, m) = roughness_.G;
  return out;
}

MatrixXd AssembledModel::g_tilde() const {
  const Index m = grid_.size();
  MatrixXd out = MatrixXd::Zero(num_individuals() * m, num_individuals() * m);
  for (Index i = 0; i < num_individuals(); ++i) out.block(i * m, i * m, m, m) = roughness_.G;
  return out;
}

MatrixXd AssembledModel::v_dense() const {
  MatrixXd out = MatrixXd::Zero(num_observations(), num_observations());
  for (Index i = 0; i < num_individuals(); ++i) {
    const Index ni = incidence_[i].rows();
    out.block(offset_[i], offset_[i], ni, ni) =
        v_inv_[i].llt().solve(MatrixXd::Identity(ni, ni));
  }
  return out;
}

AssembledModel assemble(const GeneDataset& data, VarianceComponents vc, Smoothing sp) {
  return AssembledModel(data, std::move(vc), sp);
}

double gll(const AssembledModel& model, const VectorXd& eta, const VectorXd& gamma) {
  const Index m = model.num_design_points();
  const Index n = model.num_individuals();
  if (eta.size() != 3 * m) throw std::invalid_argument("gll: eta must have length 3M");
  if (gamma.size() != n * m) throw std::invalid_argument("gll: gamma must have length nM");

  const MatrixXd& d = model.variance_components().D;
  const double sigma2 = model.variance_components().sigma2;
  Eigen::LDLT<MatrixXd> d_ldlt(d);
  if (d_ldlt.info() != Eigen::Success || (d_ldlt.vectorD().array() <= 0).any())
    throw SingularCovarianceError("gll: D is singular");
  const double logdet_d = d_ldlt.vectorD().array().log().sum();

  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);
  double quad_r = 0.0, quad_d = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto gi = gamma.segment(i * m, m);
    const VectorXd curve =
        mu + model.gender_sign(i) * alpha + model.age_sign(i) * beta + gi.matrix();
    const VectorXd resid = model.y_block(i) - model.incidence(i).gather(curve);
    quad_r += resid.squaredNorm();
    quad_d += gi.dot(d_ldlt.solve(gi.matrix()));
  }
  const double n_obs = static_cast<double>(model.num_observations());
  return quad_r / sigma2 + static_cast<double>(n) * logdet_d + quad_d + n_obs * std::log(sigma2);
}

double pgll(const AssembledModel& model, const VectorXd& eta, const VectorXd& gamma,
            const Smoothing& sp) {
  const Index m = model.num_design_points();
  const MatrixXd& g = model.roughness();
  double penalty = 0.0;
  for (Index i = 0; i < model.num_individuals(); ++i) {
    const auto gi = gamma.segment(i * m, m);
    penalty += sp.lambda_gamma * gi.dot(g * gi.matrix());
  }
  for (Index b = 0; b < 3; ++b) {
    const auto block = eta.segment(b * m, m);
    penalty += sp.lambda * block.dot(g * block.matrix());
  }
  return gll(model, eta, gamma) + penalty;
}

}  // namespace fmix
