#include <doctest.h>

#include <Eigen/Cholesky>

#include <random>

#include "fmix/model.hpp"
#include "helpers.hpp"

using namespace fmix;

namespace {

GeneDataset two_factor_singleton(Gender g, AgeGroup a) {
  // Individual of interest first, plus three padding individuals so both
  // factors have both levels.
  GeneDataset data;
  data.gene_id = "g";
  data.grid = TimeGrid{{0.0, 1.0, 2.0}};
  auto add = [&](Gender gg, AgeGroup aa) {
    IndividualSeries ind;
    ind.subject_id = "s" + std::to_string(data.individuals.size());
    ind.gender = gg;
    ind.age_group = aa;
    ind.obs_times = {0.0, 1.0, 2.0};
    ind.values = VectorXd::LinSpaced(3, 0.0, 1.0);
    data.individuals.push_back(std::move(ind));
  };
  add(g, a);
  add(g == Gender::male ? Gender::female : Gender::male, a);
  add(g, a == AgeGroup::young ? AgeGroup::old : AgeGroup::young);
  add(Gender::female, AgeGroup::old);
  return data;
}

VarianceComponents simple_vc(Index m, double d_scale = 1.0, double sigma2 = 0.5) {
  VarianceComponents vc;
  vc.D = d_scale * MatrixXd::Identity(m, m);
  vc.sigma2 = sigma2;
  return vc;
}

// Literal term-by-term evaluation of the criterion from dense matrices,
// independent of the block-wise implementation.
double gll_dense(const AssembledModel& model, const VectorXd& eta, const VectorXd& gamma) {
  const Index n = model.num_individuals();
  const Index n_obs = model.num_observations();
  const Index m = model.num_design_points();
  MatrixXd d_tilde = MatrixXd::Zero(n * m, n * m);
  for (Index i = 0; i < n; ++i)
    d_tilde.block(i * m, i * m, m, m) = model.variance_components().D;
  MatrixXd r = model.variance_components().sigma2 * MatrixXd::Identity(n_obs, n_obs);
  VectorXd resid = model.y() - model.x_star() * eta - model.x_tilde() * gamma;
  return resid.dot(r.ldlt().solve(resid)) + std::log(d_tilde.determinant()) +
         gamma.dot(d_tilde.ldlt().solve(gamma)) + std::log(r.determinant());
}

}  // namespace

TEST_CASE("sign conventions of the stacked design") {
  GeneDataset fo = two_factor_singleton(Gender::female, AgeGroup::old);
  AssembledModel m1(fo, simple_vc(3), {});
  MatrixXd expected(3, 9);
  expected << MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3);
  CHECK(m1.x_star_block(0) == expected);

  GeneDataset my = two_factor_singleton(Gender::male, AgeGroup::young);
  AssembledModel m2(my, simple_vc(3), {});
  MatrixXd expected2(3, 9);
  expected2 << MatrixXd::Identity(3, 3), -MatrixXd::Identity(3, 3), -MatrixXd::Identity(3, 3);
  CHECK(m2.x_star_block(0) == expected2);
}

TEST_CASE("zero random-curve penalty leaves D untouched") {
  std::mt19937_64 engine(3);
  GeneDataset data = test::random_dataset(engine);
  VarianceComponents vc;
  vc.D = test::random_spd(engine, data.grid.size());
  vc.sigma2 = 0.7;
  AssembledModel model(data, vc, Smoothing{2.5, 0.0});
  CHECK(model.regularized_cov() == vc.D);
}

TEST_CASE("stacked dimensions under random missingness and duplicates") {
  std::mt19937_64 engine(5);
  for (int rep = 0; rep < 10; ++rep) {
    test::RandomDataOptions opts;
    opts.n = 4 + static_cast<Index>(engine() % 4);
    opts.m = 3 + static_cast<Index>(engine() % 4);
    opts.miss_prob = 0.3;
    opts.dup_prob = 0.3;
    GeneDataset data = test::random_dataset(engine, opts);
    AssembledModel model(data, simple_vc(opts.m), {});
    const Index n_obs = data.total_observations();
    CHECK(model.num_observations() == n_obs);
    CHECK(model.x_star().rows() == n_obs);
    CHECK(model.x_star().cols() == 3 * opts.m);
    CHECK(model.x_tilde().rows() == n_obs);
    CHECK(model.x_tilde().cols() == opts.n * opts.m);
    for (Index i = 0; i < opts.n; ++i) {
      Eigen::LLT<MatrixXd> llt(model.v_inverse(i));
      CHECK(llt.info() == Eigen::Success);  // V_i^{-1} is SPD, hence V_i is
    }
  }
}

TEST_CASE("relabeling every gender flips W blocks only") {
  std::mt19937_64 engine(7);
  GeneDataset data = test::random_dataset(engine);
  GeneDataset flipped = data;
  for (auto& ind : flipped.individuals)
    ind.gender = ind.gender == Gender::male ? Gender::female : Gender::male;
  AssembledModel a(data, simple_vc(data.grid.size()), {});
  AssembledModel b(flipped, simple_vc(data.grid.size()), {});
  for (Index i = 0; i < a.num_individuals(); ++i) {
    CHECK(b.w_block(i) == (-a.w_block(i)).eval());
    CHECK(b.x_block(i) == a.x_block(i));
    CHECK(b.z_block(i) == a.z_block(i));
  }
}

TEST_CASE("single-level factors are rejected as inestimable") {
  std::mt19937_64 engine(9);
  GeneDataset data = test::random_dataset(engine);
  GeneDataset all_male = data;
  for (auto& ind : all_male.individuals) ind.gender = Gender::male;
  try {
    AssembledModel model(all_male, simple_vc(data.grid.size()), {});
    FAIL("expected InestimableEffectError");
  } catch (const InestimableEffectError& e) {
    CHECK(e.factor == "gender");
  }

  GeneDataset all_old = data;
  for (auto& ind : all_old.individuals) ind.age_group = AgeGroup::old;
  try {
    AssembledModel model(all_old, simple_vc(data.grid.size()), {});
    FAIL("expected InestimableEffectError");
  } catch (const InestimableEffectError& e) {
    CHECK(e.factor == "age_group");
  }
}

TEST_CASE("gll at a residual-free point with zero gamma is the log-determinant part") {
  std::mt19937_64 engine(11);
  GeneDataset data = test::random_dataset(engine);
  const Index m = data.grid.size();
  const Index n = static_cast<Index>(data.individuals.size());
  std::normal_distribution<double> normal;
  VectorXd eta(3 * m);
  for (Index i = 0; i < 3 * m; ++i) eta[i] = normal(engine);
  // overwrite observations so that y = X* eta exactly
  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);
  for (auto& ind : data.individuals) {
    const double s = ind.gender == Gender::female ? 1.0 : -1.0;
    const double t = ind.age_group == AgeGroup::old ? 1.0 : -1.0;
    for (Index j = 0; j < ind.n_obs(); ++j) {
      const Index col = data.grid.locate(ind.obs_times[static_cast<size_t>(j)]);
      ind.values[j] = mu[col] + s * alpha[col] + t * beta[col];
    }
  }
  VarianceComponents vc = simple_vc(m, 2.0, 0.3);
  AssembledModel model(data, vc, {});
  const double expected = static_cast<double>(n) * std::log(vc.D.determinant()) +
                          static_cast<double>(model.num_observations()) * std::log(vc.sigma2);
  CHECK(gll(model, eta, VectorXd::Zero(n * m)) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("doubling sigma2 shifts gll by N log 2 minus half the quadratic term") {
  std::mt19937_64 engine(13);
  GeneDataset data = test::random_dataset(engine);
  const Index m = data.grid.size();
  const Index n = static_cast<Index>(data.individuals.size());
  std::normal_distribution<double> normal;
  VectorXd eta = VectorXd::Zero(3 * m), gamma = VectorXd::Zero(n * m);
  for (Index i = 0; i < eta.size(); ++i) eta[i] = normal(engine);

  const double s2 = 0.4;
  AssembledModel base(data, simple_vc(m, 1.0, s2), {});
  AssembledModel doubled(data, simple_vc(m, 1.0, 2.0 * s2), {});
  // quadratic residual term at sigma2 = s2
  double quad = 0.0;
  const auto mu = eta.segment(0, m), alpha = eta.segment(m, m), beta = eta.segment(2 * m, m);
  for (Index i = 0; i < n; ++i) {
    const VectorXd curve = mu + base.gender_sign(i) * alpha + base.age_sign(i) * beta;
    quad += (base.y_block(i) - base.incidence(i).gather(curve)).squaredNorm() / s2;
  }
  const double expected = gll(base, eta, gamma) +
                          static_cast<double>(base.num_observations()) * std::log(2.0) -
                          quad / 2.0;
  CHECK(gll(doubled, eta, gamma) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("gll matches a literal dense evaluation on random instances") {
  std::mt19937_64 engine(17);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 5; ++rep) {
    test::RandomDataOptions opts;
    opts.n = 3;
    opts.m = 4;
    opts.miss_prob = 0.2;
    GeneDataset data = test::random_dataset(engine, opts);
    VarianceComponents vc;
    vc.D = test::random_spd(engine, opts.m);
    vc.sigma2 = 0.6;
    AssembledModel model(data, vc, {});
    VectorXd eta(3 * opts.m), gamma(opts.n * opts.m);
    for (Index i = 0; i < eta.size(); ++i) eta[i] = normal(engine);
    for (Index i = 0; i < gamma.size(); ++i) gamma[i] = normal(engine);
    CHECK(gll(model, eta, gamma) ==
          doctest::Approx(gll_dense(model, eta, gamma)).epsilon(1e-9));
  }
}

TEST_CASE("pgll equals gll plus spline-integral penalties") {
  std::mt19937_64 engine(19);
  std::normal_distribution<double> normal;
  test::RandomDataOptions opts;
  opts.n = 3;
  opts.m = 5;
  GeneDataset data = test::random_dataset(engine, opts);
  VarianceComponents vc = simple_vc(opts.m, 1.5, 0.5);
  Smoothing sp{0.8, 2.3};
  AssembledModel model(data, vc, sp);
  VectorXd eta(3 * opts.m), gamma(opts.n * opts.m);
  for (Index i = 0; i < eta.size(); ++i) eta[i] = normal(engine);
  for (Index i = 0; i < gamma.size(); ++i) gamma[i] = normal(engine);

  // Oracle: penalties as exact integrals of the interpolating splines.
  double penalty = 0.0;
  for (Index i = 0; i < opts.n; ++i)
    penalty +=
        sp.lambda_gamma *
        roughness_functional(NaturalCubicSpline(data.grid, gamma.segment(i * opts.m, opts.m)));
  for (Index b = 0; b < 3; ++b)
    penalty +=
        sp.lambda *
        roughness_functional(NaturalCubicSpline(data.grid, eta.segment(b * opts.m, opts.m)));

  CHECK(pgll(model, eta, gamma, sp) ==
        doctest::Approx(gll(model, eta, gamma) + penalty).epsilon(1e-10));

  SUBCASE("zero penalties collapse pgll to gll") {
    CHECK(pgll(model, eta, gamma, Smoothing{0.0, 0.0}) == gll(model, eta, gamma));
  }
  SUBCASE("linear fixed-effect blocks are penalty-free") {
    VectorXd linear(3 * opts.m);
    for (Index b = 0; b < 3; ++b)
      linear.segment(b * opts.m, opts.m) =
          (static_cast<double>(b) + 1.0) * data.grid.points() + VectorXd::Constant(opts.m, 0.3);
    const double with_penalty = pgll(model, linear, gamma, Smoothing{5.0, 0.0});
    CHECK(with_penalty == doctest::Approx(gll(model, linear, gamma)).epsilon(1e-10));
  }
  SUBCASE("pgll never falls below gll") {
    for (int rep = 0; rep < 10; ++rep) {
      Smoothing random_sp{std::abs(normal(engine)), std::abs(normal(engine))};
      CHECK(pgll(model, eta, gamma, random_sp) >= gll(model, eta, gamma) - 1e-12);
    }
  }
}
