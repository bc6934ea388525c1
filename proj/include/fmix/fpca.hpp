#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmix/estimation.hpp"

namespace fmix {

enum class CurveNormalization { none, subtract_first };

/// Fitted mean curves evaluated on a fine equally spaced grid, one row per
/// gene.
struct CurveMatrix {
  VectorXd grid;     // n_grid points spanning [tau_1, tau_M]
  double spacing = 0.0;
  MatrixXd values;   // G x n_grid
  CurveNormalization normalization = CurveNormalization::subtract_first;
  std::vector<std::string> gene_ids;
};

/// Natural-cubic-spline evaluation of each fit's mean curve on the fine grid;
/// with subtract_first each row is shifted so it starts at zero.
CurveMatrix discretize(std::span<const ModelFit> fits, int n_grid,
                       CurveNormalization normalization);

struct FpcaOptions {
  /// Retain the smallest K whose cumulative explained fraction reaches the
  /// target, capped at max_components; exact_k overrides both.
  double variance_target = 0.999;
  int max_components = 10;
  std::optional<int> exact_k;
};

struct FpcaResult {
  VectorXd grid;
  double spacing = 0.0;
  MatrixXd components;       // n_grid x K, functionally normalized: w ||xi||^2 = 1
  VectorXd eigenvalues;      // K retained, on the functional scale rho = w lambda
  VectorXd explained;        // fraction of total variance per retained component
  VectorXd all_eigenvalues;  // full spectrum, descending, functional scale
  VectorXd mean_curve;       // n_grid, the cross-gene mean of the rows
  MatrixXd loadings;         // G x K least-squares coefficients
};

/// Centers the curves, eigen-decomposes the sample covariance on the grid and
/// rescales to the functional eigenequation w V xi = rho xi.
FpcaResult decompose(const CurveMatrix& cm, const FpcaOptions& opts = {});

/// Per-curve least-squares coefficients of the centered rows on the retained
/// components; with the functional normalization this is the w-weighted
/// projection.
MatrixXd loadings(const CurveMatrix& cm, const FpcaResult& result);

}  // namespace fmix
