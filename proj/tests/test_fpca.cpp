#include <doctest.h>

#include <random>

#include "fmix/fpca.hpp"
#include "helpers.hpp"

using namespace fmix;

namespace {

// Builds synthetic "fits" directly: only grid and mu are consumed by fPCA.
std::vector<ModelFit> fits_from_curves(const TimeGrid& grid, const MatrixXd& curves) {
  std::vector<ModelFit> fits(static_cast<size_t>(curves.rows()));
  for (Index g = 0; g < curves.rows(); ++g) {
    fits[static_cast<size_t>(g)].gene_id = "g" + std::to_string(g);
    fits[static_cast<size_t>(g)].grid = grid;
    fits[static_cast<size_t>(g)].mu = curves.row(g).transpose();
  }
  return fits;
}

}  // namespace

TEST_CASE("discretization hits design points exactly and normalizes rows") {
  TimeGrid grid{{0.0, 1.0, 2.0}};
  MatrixXd curves(2, 3);
  curves << 1.0, 2.0, 4.0, 3.0, 3.0, 3.0;
  auto fits = fits_from_curves(grid, curves);

  CurveMatrix raw = discretize(fits, 5, CurveNormalization::none);
  CHECK(raw.spacing == doctest::Approx(0.5));
  // grid points 0, 0.5, 1, 1.5, 2: design points at columns 0, 2, 4
  CHECK(raw.values(0, 0) == 1.0);
  CHECK(raw.values(0, 2) == 2.0);
  CHECK(raw.values(0, 4) == 4.0);

  CurveMatrix norm = discretize(fits, 5, CurveNormalization::subtract_first);
  CHECK((norm.values.col(0).array() == 0.0).all());
  // a constant curve becomes the zero row
  CHECK(norm.values.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discretize rejects mismatched grids and tiny inputs") {
  TimeGrid g1{{0.0, 1.0, 2.0}};
  TimeGrid g2{{0.0, 1.0, 3.0}};
  MatrixXd curves = MatrixXd::Zero(1, 3);
  auto fits = fits_from_curves(g1, curves);
  auto other = fits_from_curves(g2, curves);
  fits.push_back(other[0]);
  CHECK_THROWS_AS(discretize(fits, 10, CurveNormalization::none), std::invalid_argument);
}

TEST_CASE("affine curve family is rank one after first-point normalization") {
  std::mt19937_64 engine(501);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 0.5, 1.0, 1.5, 2.0}};
  const Index n_genes = 40;
  MatrixXd curves(n_genes, 5);
  for (Index g = 0; g < n_genes; ++g) {
    const double a = normal(engine), b = normal(engine);
    for (Index j = 0; j < 5; ++j) curves(g, j) = a + b * grid.points()[j];
  }
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 101, CurveNormalization::subtract_first);
  FpcaResult res = decompose(cm);
  CHECK(res.explained[0] > 0.9999);
}

TEST_CASE("two planted orthonormal components are recovered") {
  std::mt19937_64 engine(503);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 1.0, 2.0, 3.0}};
  const Index n_grid = 201;
  const Index n_genes = 800;

  VectorXd t = VectorXd::LinSpaced(n_grid, 0.0, 3.0);
  const double w = 3.0 / static_cast<double>(n_grid - 1);
  // Orthogonal pair on [0,3]: cos and sin of the first Fourier frequencies.
  VectorXd xi1(n_grid), xi2(n_grid);
  for (Index j = 0; j < n_grid; ++j) {
    xi1[j] = std::cos(2.0 * M_PI * t[j] / 3.0);
    xi2[j] = std::sin(2.0 * M_PI * t[j] / 3.0);
  }
  xi1 /= std::sqrt(w) * xi1.norm();
  xi2 /= std::sqrt(w) * xi2.norm();

  MatrixXd rows(n_genes, n_grid);
  for (Index g = 0; g < n_genes; ++g)
    rows.row(g) = (3.0 * normal(engine) * xi1 + 0.8 * normal(engine) * xi2).transpose();

  CurveMatrix cm;
  cm.grid = t;
  cm.spacing = w;
  cm.values = rows;
  cm.normalization = CurveNormalization::none;
  for (Index g = 0; g < n_genes; ++g) cm.gene_ids.push_back("g" + std::to_string(g));

  FpcaOptions opts;
  opts.exact_k = 2;
  FpcaResult res = decompose(cm, opts);

  // principal angle between span{xi1, xi2} and the recovered pair
  MatrixXd truth(n_grid, 2), found(n_grid, 2);
  truth.col(0) = xi1 * std::sqrt(w);
  truth.col(1) = xi2 * std::sqrt(w);
  found = res.components * std::sqrt(w);
  Eigen::JacobiSVD<MatrixXd> svd(truth.transpose() * found);
  const double min_cos = svd.singularValues().minCoeff();
  CHECK(std::acos(std::min(1.0, min_cos)) < 0.05);
  CHECK(res.explained.sum() > 0.999);
}

TEST_CASE("identical curves have an all-zero spectrum") {
  TimeGrid grid{{0.0, 1.0, 2.0}};
  MatrixXd curves = MatrixXd::Constant(5, 3, 2.5);
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 21, CurveNormalization::none);
  FpcaResult res = decompose(cm);
  CHECK(res.all_eigenvalues.cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("eigenpairs satisfy the discretized functional eigenequation") {
  std::mt19937_64 engine(509);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 1.0, 2.0, 3.0, 4.0}};
  MatrixXd curves(30, 5);
  for (Index g = 0; g < 30; ++g)
    for (Index j = 0; j < 5; ++j) curves(g, j) = normal(engine);
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 41, CurveNormalization::none);
  FpcaOptions opts;
  opts.exact_k = 3;
  FpcaResult res = decompose(cm, opts);

  MatrixXd centered = cm.values.rowwise() - res.mean_curve.transpose();
  MatrixXd v = centered.transpose() * centered / static_cast<double>(cm.values.rows());
  for (Index k = 0; k < 3; ++k) {
    VectorXd lhs = cm.spacing * (v * res.components.col(k));
    VectorXd rhs = res.eigenvalues[k] * res.components.col(k);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
    // functional normalization and orthogonality
    CHECK(cm.spacing * res.components.col(k).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
    for (Index j = 0; j < k; ++j)
      CHECK(std::abs(cm.spacing * res.components.col(j).dot(res.components.col(k))) < 1e-8);
  }
  SUBCASE("requesting more components than the rank is an error") {
    FpcaOptions bad;
    bad.exact_k = 40;
    CHECK_THROWS_AS(decompose(cm, bad), std::invalid_argument);
  }
}

TEST_CASE("loadings are the weighted projections of centered curves") {
  std::mt19937_64 engine(521);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 1.0, 2.0, 3.0}};
  MatrixXd curves(25, 4);
  for (Index g = 0; g < 25; ++g)
    for (Index j = 0; j < 4; ++j) curves(g, j) = normal(engine);
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 31, CurveNormalization::none);
  FpcaOptions opts;
  opts.exact_k = 2;
  FpcaResult res = decompose(cm, opts);

  SUBCASE("a curve equal to mean plus twice the first component loads (2, 0)") {
    CurveMatrix synthetic = cm;
    synthetic.values.row(0) = (res.mean_curve + 2.0 * res.components.col(0)).transpose();
    MatrixXd k = loadings(synthetic, res);
    CHECK(k(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(std::abs(k(0, 1)) < 1e-10);
  }
  SUBCASE("the mean curve itself has zero loadings") {
    CurveMatrix synthetic = cm;
    synthetic.values.row(0) = res.mean_curve.transpose();
    MatrixXd k = loadings(synthetic, res);
    CHECK(k.row(0).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("reconstruction error never grows with more components") {
    FpcaOptions all;
    all.exact_k = 3;
    all.max_components = 10;
    FpcaResult res3 = decompose(cm, all);
    MatrixXd centered = cm.values.rowwise() - res3.mean_curve.transpose();
    double prev = std::numeric_limits<double>::infinity();
    for (Index k = 1; k <= 3; ++k) {
      MatrixXd approx = res3.loadings.leftCols(k) * res3.components.leftCols(k).transpose();
      const double err = (centered - approx).norm();
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("explained fractions over the whole spectrum sum to one") {
  std::mt19937_64 engine(523);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 1.0, 2.0, 3.0}};
  MatrixXd curves(12, 4);
  for (Index g = 0; g < 12; ++g)
    for (Index j = 0; j < 4; ++j) curves(g, j) = normal(engine);
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 25, CurveNormalization::subtract_first);
  FpcaResult res = decompose(cm);
  CHECK(res.all_eigenvalues.sum() / res.all_eigenvalues.sum() == 1.0);
  // fractions recomputed from the full spectrum
  const double total = res.all_eigenvalues.sum();
  double acc = 0.0;
  for (Index k = 0; k < res.all_eigenvalues.size(); ++k) acc += res.all_eigenvalues[k] / total;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("component signs are deterministic") {
  std::mt19937_64 engine(541);
  std::normal_distribution<double> normal;
  TimeGrid grid{{0.0, 1.0, 2.0, 3.0}};
  MatrixXd curves(20, 4);
  for (Index g = 0; g < 20; ++g)
    for (Index j = 0; j < 4; ++j) curves(g, j) = normal(engine);
  auto fits = fits_from_curves(grid, curves);
  CurveMatrix cm = discretize(fits, 33, CurveNormalization::none);
  FpcaResult a = decompose(cm);
  FpcaResult b = decompose(cm);
  CHECK(a.components == b.components);
  for (Index k = 0; k < a.components.cols(); ++k) {
    Index imax;
    a.components.col(k).cwiseAbs().maxCoeff(&imax);
    CHECK(a.components(imax, k) > 0.0);
  }
}
