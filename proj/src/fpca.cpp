#include "fmix/fpca.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace fmix {

CurveMatrix discretize(std::span<const ModelFit> fits, int n_grid,
                       CurveNormalization normalization) {
  if (fits.empty()) throw std::invalid_argument("discretize: no fits");
  if (n_grid < 2) throw std::invalid_argument("discretize: n_grid must be at least 2");
  const TimeGrid& grid = fits.front().grid;
  for (const auto& fit : fits)
    if (!(fit.grid == grid)) throw std::invalid_argument("discretize: fits use different grids");

  CurveMatrix cm;
  cm.normalization = normalization;
  cm.grid = VectorXd::LinSpaced(n_grid, grid.front(), grid.back());
  cm.spacing = grid.span() / static_cast<double>(n_grid - 1);
  cm.values.resize(static_cast<Index>(fits.size()), n_grid);
  cm.gene_ids.reserve(fits.size());
  for (size_t g = 0; g < fits.size(); ++g) {
    NaturalCubicSpline s(fits[g].grid, fits[g].mu);
    for (Index j = 0; j < n_grid; ++j) cm.values(static_cast<Index>(g), j) = s.value(cm.grid[j]);
    if (normalization == CurveNormalization::subtract_first)
      cm.values.row(static_cast<Index>(g)).array() -= cm.values(static_cast<Index>(g), 0);
    cm.gene_ids.push_back(fits[g].gene_id);
  }
  return cm;
}

FpcaResult decompose(const CurveMatrix& cm, const FpcaOptions& opts) {
  const Index n_curves = cm.values.rows();
  const Index n_grid = cm.values.cols();
  if (n_curves < 2) throw std::invalid_argument("decompose: need at least 2 curves");

  FpcaResult out;
  out.grid = cm.grid;
  out.spacing = cm.spacing;
  out.mean_curve = cm.values.colwise().mean();

  MatrixXd centered = cm.values.rowwise() - out.mean_curve.transpose();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(n_curves);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("decompose: eigensolver failed");

  // Ascending from Eigen; flip to descending and move to the functional scale.
  out.all_eigenvalues.resize(n_grid);
  for (Index k = 0; k < n_grid; ++k)
    out.all_eigenvalues[k] = cm.spacing * std::max(0.0, es.eigenvalues()[n_grid - 1 - k]);
  const double total = out.all_eigenvalues.sum();

  const double rank_tol = 1e-12 * std::max(out.all_eigenvalues[0], 1e-300);
  Index rank = 0;
  while (rank < n_grid && out.all_eigenvalues[rank] > rank_tol) ++rank;

  Index keep;
  if (opts.exact_k) {
    keep = *opts.exact_k;
    if (keep < 1 || keep > rank)
      throw std::invalid_argument("decompose: requested components exceed rank");
  } else {
    keep = 0;
    double cumulative = 0.0;
    while (keep < std::min<Index>(rank, opts.max_components)) {
      cumulative += total > 0 ? out.all_eigenvalues[keep] / total : 1.0;
      ++keep;
      if (cumulative >= opts.variance_target) break;
    }
    keep = std::max<Index>(keep, 1);
  }

  out.eigenvalues = out.all_eigenvalues.head(keep);
  out.explained.resize(keep);
  for (Index k = 0; k < keep; ++k)
    out.explained[k] = total > 0 ? out.eigenvalues[k] / total : 0.0;

  // Unit eigenvectors become functions via xi = u / sqrt(w) so that
  // w ||xi||^2 = 1; sign fixed by the largest-magnitude coordinate.
  out.components.resize(n_grid, keep);
  const double scale = 1.0 / std::sqrt(cm.spacing);
  for (Index k = 0; k < keep; ++k) {
    VectorXd u = es.eigenvectors().col(n_grid - 1 - k);
    Index imax;
    u.cwiseAbs().maxCoeff(&imax);
    if (u[imax] < 0) u = -u;
    out.components.col(k) = scale * u;
  }
  out.loadings = loadings(cm, out);
  return out;
}

MatrixXd loadings(const CurveMatrix& cm, const FpcaResult& result) {
  MatrixXd centered = cm.values.rowwise() - result.mean_curve.transpose();
  // Least squares of each centered row on the components; the components are
  // orthonormal in the w-weighted inner product, so the normal equations
  // reduce to the weighted projection.
  return cm.spacing * (centered * result.components);
}

}  // namespace fmix
