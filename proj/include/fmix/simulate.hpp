#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fmix/model.hpp"

namespace fmix {

/// Ground-truth recipe for one synthetic gene: fixed-effect curves as
/// callables evaluated at the design points, a random-curve covariance, the
/// noise variance and the observation layout.
struct SimulationSpec {
  std::string gene_id = "sim";
  TimeGrid grid;
  int n_individuals = 4;
  /// Per-individual labels; when empty, individuals cycle through the four
  /// gender x age combinations so both levels of both factors are present.
  std::vector<std::pair<Gender, AgeGroup>> labels;
  std::function<double(double)> mu = [](double) { return 0.0; };
  std::function<double(double)> alpha = [](double) { return 0.0; };
  std::function<double(double)> beta = [](double) { return 0.0; };
  MatrixXd d_true;  // M x M PSD; defaults to zero
  double sigma2_true = 1.0;
  /// (individual, design-point index) pairs dropped from the layout.
  std::vector<std::pair<int, int>> missing;
  /// Observations per retained design point (duplicates in the incidence).
  int replicates = 1;
  std::uint64_t seed = 0;
};

struct SimulatedGene {
  GeneDataset data;
  MatrixXd gamma_true;  // n x M draws of the random curves
  VectorXd mu_true, alpha_true, beta_true;  // fixed effects at design points
};

/// Draws gamma_i ~ N(0, D), eps ~ N(0, sigma2) and assembles observations
/// under the signed two-factor model. Deterministic given the seed.
SimulatedGene generate(const SimulationSpec& spec);

}  // namespace fmix
