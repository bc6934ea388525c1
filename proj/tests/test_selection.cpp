#include <doctest.h>

#include <random>

#include "fmix/selection.hpp"
#include "fmix/simulate.hpp"
#include "helpers.hpp"

using namespace fmix;

namespace {

SimulatedGene wiggly_gene(std::uint64_t seed, Index n = 6, Index m = 5) {
  SimulationSpec spec;
  std::mt19937_64 engine(seed);
  spec.grid = test::random_grid(engine, m);
  spec.n_individuals = static_cast<int>(n);
  spec.mu = [](double t) { return std::sin(1.7 * t); };
  spec.alpha = [](double t) { return 0.3 * std::cos(t); };
  spec.d_true = 0.4 * MatrixXd::Identity(m, m);
  spec.sigma2_true = 0.25;
  spec.seed = seed;
  return generate(spec);
}

}  // namespace

TEST_CASE("smoother matrices reproduce the fitted values") {
  std::mt19937_64 engine(101);
  std::uniform_real_distribution<double> unif;
  for (int rep = 0; rep < 10; ++rep) {
    test::RandomDataOptions opts;
    opts.n = 3 + static_cast<Index>(engine() % 3);
    opts.m = 3 + static_cast<Index>(engine() % 3);
    opts.miss_prob = 0.2;
    opts.dup_prob = 0.2;
    GeneDataset data = test::random_dataset(engine, opts);
    VarianceComponents vc;
    vc.D = test::random_spd(engine, opts.m);
    vc.sigma2 = 0.3 + unif(engine);
    Smoothing sp{std::pow(10.0, -2.0 + 4.0 * unif(engine)),
                 std::pow(10.0, -2.0 + 4.0 * unif(engine))};
    AssembledModel model(data, vc, sp);

    CurveEstimates est = blup(model);
    VectorXd fitted = model.x_star() * est.eta + model.x_tilde() * est.gamma;
    SmootherMatrices sm = smoother_matrices(model);
    VectorXd smoothed = (sm.a_eta + sm.a_gamma) * model.y();
    CHECK((smoothed - fitted).cwiseAbs().maxCoeff() < 1e-10);

    DegreesOfFreedom df = degrees_of_freedom(model);
    CHECK(df.fixed == doctest::Approx(sm.df_fixed).epsilon(1e-8));
    CHECK(df.random == doctest::Approx(sm.df_random).epsilon(1e-8));
  }
}

TEST_CASE("infinite fixed-effect smoothing leaves two degrees per curve") {
  std::mt19937_64 engine(103);
  test::RandomDataOptions opts;
  opts.n = 6;
  opts.m = 5;
  GeneDataset data = test::random_dataset(engine, opts);
  VarianceComponents vc;
  vc.D = test::random_spd(engine, opts.m);
  vc.sigma2 = 0.5;
  AssembledModel model(data, vc, Smoothing{1e12, 1.0});
  DegreesOfFreedom df = degrees_of_freedom(model);
  CHECK(std::abs(df.fixed - 6.0) < 0.05);
}

TEST_CASE("infinite random-effect smoothing caps the random degrees at two per individual") {
  std::mt19937_64 engine(107);
  test::RandomDataOptions opts;
  opts.n = 5;
  opts.m = 5;
  GeneDataset data = test::random_dataset(engine, opts);
  VarianceComponents vc;
  vc.D = test::random_spd(engine, opts.m, 2.0);
  vc.sigma2 = 0.4;
  AssembledModel model(data, vc, Smoothing{1.0, 1e12});
  DegreesOfFreedom df = degrees_of_freedom(model);
  CHECK(df.random <= 2.0 * static_cast<double>(opts.n) + 0.05);
}

TEST_CASE("degrees of freedom decrease monotonically in the penalties") {
  std::mt19937_64 engine(109);
  test::RandomDataOptions opts;
  opts.n = 5;
  opts.m = 5;
  GeneDataset data = test::random_dataset(engine, opts);
  VarianceComponents vc;
  vc.D = test::random_spd(engine, opts.m);
  vc.sigma2 = 0.5;

  double prev_fixed = std::numeric_limits<double>::infinity();
  double prev_random = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 10; ++k) {
    const double lam = std::pow(10.0, -4.0 + k);
    AssembledModel mf(data, vc, Smoothing{lam, 1.0});
    DegreesOfFreedom dff = degrees_of_freedom(mf);
    CHECK(dff.fixed <= prev_fixed + 1e-6);
    CHECK(dff.fixed > 0);
    CHECK(dff.fixed <= 3.0 * opts.m + 1e-9);
    prev_fixed = dff.fixed;

    AssembledModel mr(data, vc, Smoothing{1.0, lam});
    DegreesOfFreedom dfr = degrees_of_freedom(mr);
    CHECK(dfr.random <= prev_random + 1e-6);
    CHECK(dfr.random >= 0);
    CHECK(dfr.random <= static_cast<double>(opts.n * opts.m) + 1e-9);
    prev_random = dfr.random;
  }
}

TEST_CASE("criterion formulas") {
  ModelFit fit;
  fit.loglik = -12.5;
  fit.fitted = VectorXd::Zero(9);  // N = 9

  SUBCASE("AIC and BIC differ exactly by the penalty factor") {
    fit.df_fixed = 3.0;
    fit.df_random = 1.5;
    const double df = fit.df_total();
    const double aic = criterion_score(fit, Criterion::aic);
    const double bic = criterion_score(fit, Criterion::bic);
    CHECK(aic == doctest::Approx(-2.0 * fit.loglik + 2.0 * df));
    CHECK(bic == doctest::Approx(-2.0 * fit.loglik + std::log(9.0) * df));
    CHECK(bic > aic);  // log(9) > 2 and df > 0
  }
  SUBCASE("hypothetical zero df collapses both to -2 lik") {
    fit.df_fixed = -1.0;  // forces df_total to 0
    fit.df_random = 0.0;
    CHECK(criterion_score(fit, Criterion::aic) == doctest::Approx(25.0));
    CHECK(criterion_score(fit, Criterion::bic) == doctest::Approx(25.0));
  }
  SUBCASE("both criteria increase strictly with df at fixed likelihood") {
    fit.df_fixed = 2.0;
    fit.df_random = 0.0;
    const double aic1 = criterion_score(fit, Criterion::aic);
    const double bic1 = criterion_score(fit, Criterion::bic);
    fit.df_random = 2.5;
    CHECK(criterion_score(fit, Criterion::aic) > aic1);
    CHECK(criterion_score(fit, Criterion::bic) > bic1);
  }
}

TEST_CASE("selection lands near the grid-search optimum") {
  SimulatedGene sim = wiggly_gene(211);
  SelectionOptions opts;
  opts.criterion = Criterion::bic;
  opts.simplex_budget = 60;
  opts.em.tol = 1e-6;
  SelectionResult result = select(sim.data, opts);

  // Oracle: coarse grid search over the same box.
  double best_value = std::numeric_limits<double>::infinity();
  Smoothing best_sp;
  for (int i = -8; i <= 12; ++i) {
    for (int j = -8; j <= 12; ++j) {
      Smoothing sp{std::pow(10.0, i), std::pow(10.0, j)};
      ModelFit fit = fit_em(sim.data, sp, opts.em);
      const double value = criterion_score(fit, Criterion::bic);
      if (value < best_value) {
        best_value = value;
        best_sp = sp;
      }
    }
  }
  CHECK(std::abs(std::log10(result.best_sp.lambda) - std::log10(best_sp.lambda)) <= 1.0);
  CHECK(std::abs(std::log10(result.best_sp.lambda_gamma) - std::log10(best_sp.lambda_gamma)) <=
        1.0);
  CHECK(result.criterion_value <= best_value + 0.1);

  SUBCASE("best value bounds every trace entry") {
    for (const auto& eval : result.trace) CHECK(result.criterion_value <= eval.value);
  }
}

TEST_CASE("exactly linear truth drives the fixed-effect penalty to the bound") {
  SimulationSpec spec;
  spec.grid = TimeGrid{{0.0, 1.0, 2.0, 3.0, 4.0}};
  spec.n_individuals = 8;
  spec.mu = [](double t) { return 1.0 + 0.8 * t; };
  spec.alpha = [](double t) { return 0.2 - 0.1 * t; };
  spec.beta = [](double t) { return 0.05 * t; };
  spec.sigma2_true = 0.05;
  spec.d_true = MatrixXd::Zero(5, 5);
  spec.seed = 31;
  SimulatedGene sim = generate(spec);

  SelectionOptions opts;
  opts.simplex_budget = 100;
  SelectionResult result = select(sim.data, opts);
  CHECK(std::log10(result.best_sp.lambda) > 8.0);
}

TEST_CASE("zero budget returns the best initial-simplex vertex") {
  SimulatedGene sim = wiggly_gene(223);
  SelectionOptions opts;
  opts.simplex_budget = 0;
  SelectionResult result = select(sim.data, opts);
  CHECK(result.trace.size() == 3);  // the three initial vertices
  double best = std::numeric_limits<double>::infinity();
  for (const auto& eval : result.trace) best = std::min(best, eval.value);
  CHECK(result.criterion_value == best);
}

TEST_CASE("selection is deterministic") {
  SimulatedGene sim = wiggly_gene(227);
  SelectionOptions opts;
  opts.simplex_budget = 25;
  SelectionResult a = select(sim.data, opts);
  SelectionResult b = select(sim.data, opts);
  CHECK(a.best_sp.lambda == b.best_sp.lambda);
  CHECK(a.best_sp.lambda_gamma == b.best_sp.lambda_gamma);
  CHECK(a.criterion_value == b.criterion_value);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].value == b.trace[i].value);
}
