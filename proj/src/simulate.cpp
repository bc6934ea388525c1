#include "fmix/simulate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>
#include <set>

namespace fmix {

SimulatedGene generate(const SimulationSpec& spec) {
  const Index m = spec.grid.size();
  const int n = spec.n_individuals;
  if (n < 1) throw std::invalid_argument("generate: need at least one individual");
  if (!(spec.sigma2_true >= 0))
    throw std::invalid_argument("generate: sigma2_true must be non-negative");
  if (spec.replicates < 1) throw std::invalid_argument("generate: replicates must be >= 1");
  if (!spec.labels.empty() && static_cast<int>(spec.labels.size()) != n)
    throw std::invalid_argument("generate: labels must be empty or one per individual");

  MatrixXd d = spec.d_true.size() == 0 ? MatrixXd::Zero(m, m) : spec.d_true;
  if (d.rows() != m || d.cols() != m) throw std::invalid_argument("generate: D must be M x M");

  // PSD square root for sampling; small negatives from rounding are clamped.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(d);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw std::invalid_argument("generate: D must be positive semi-definite");
  MatrixXd sqrt_d = es.eigenvectors() *
                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                    es.eigenvectors().transpose();

  std::set<std::pair<int, int>> dropped(spec.missing.begin(), spec.missing.end());
  for (const auto& [i, r] : dropped)
    if (i < 0 || i >= n || r < 0 || r >= m)
      throw std::invalid_argument("generate: missing entry out of range");

  std::mt19937_64 engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedGene out;
  out.data.gene_id = spec.gene_id;
  out.data.grid = spec.grid;
  out.gamma_true.resize(n, m);
  out.mu_true.resize(m);
  out.alpha_true.resize(m);
  out.beta_true.resize(m);
  for (Index r = 0; r < m; ++r) {
    const double t = spec.grid.points()[r];
    out.mu_true[r] = spec.mu(t);
    out.alpha_true[r] = spec.alpha(t);
    out.beta_true[r] = spec.beta(t);
  }

  static const std::pair<Gender, AgeGroup> cycle[4] = {
      {Gender::female, AgeGroup::old},
      {Gender::male, AgeGroup::young},
      {Gender::female, AgeGroup::young},
      {Gender::male, AgeGroup::old},
  };

  const double noise_sd = std::sqrt(spec.sigma2_true);
  for (int i = 0; i < n; ++i) {
    IndividualSeries ind;
    ind.subject_id = "s" + std::to_string(i + 1);
    const auto [gender, age] =
        spec.labels.empty() ? cycle[i % 4] : spec.labels[static_cast<size_t>(i)];
    ind.gender = gender;
    ind.age_group = age;
    const double s = gender == Gender::female ? 1.0 : -1.0;
    const double t_sign = age == AgeGroup::old ? 1.0 : -1.0;

    VectorXd z(m);
    for (Index r = 0; r < m; ++r) z[r] = normal(engine);
    VectorXd gamma = sqrt_d * z;
    out.gamma_true.row(i) = gamma.transpose();

    std::vector<double> values;
    for (Index r = 0; r < m; ++r) {
      if (dropped.count({i, static_cast<int>(r)})) continue;
      for (int rep = 0; rep < spec.replicates; ++rep) {
        ind.obs_times.push_back(spec.grid.points()[r]);
        values.push_back(out.mu_true[r] + s * out.alpha_true[r] + t_sign * out.beta_true[r] +
                         gamma[r] + noise_sd * normal(engine));
      }
    }
    if (values.empty())
      throw std::invalid_argument("generate: individual " + std::to_string(i) +
                                  " has no observations left");
    ind.values = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
    out.data.individuals.push_back(std::move(ind));
  }
  return out;
}

}  // namespace fmix
