#include "fmix/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmix/parallel.hpp"
#include "fmix/rng.hpp"
#include "fmix/stats.hpp"

namespace fmix {

std::string to_string(EffectKind e) {
  switch (e) {
    case EffectKind::gender: return "gender";
    case EffectKind::age: return "age";
    case EffectKind::temporal: return "temporal";
  }
  return "?";
}

FixedEffectBands theoretical_bands(const AssembledModel& model, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("theoretical_bands: level must be in (0,1)");
  NormalEquations ne = normal_equations(model);
  const Index m = model.num_design_points();
  const VectorXd eta = ne.factor.solve(ne.rhs);
  // cov(eta) = F^{-1} info F^{-1} with F = info + lambda G*.
  MatrixXd finv_info = ne.factor.solve(ne.info);
  MatrixXd cov = ne.factor.solve(finv_info.transpose());
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);

  FixedEffectBands bands;
  ConfidenceBand* out[3] = {&bands.mu, &bands.alpha, &bands.beta};
  for (Index b = 0; b < 3; ++b) {
    VectorXd center = eta.segment(b * m, m);
    VectorXd se = cov.diagonal().segment(b * m, m).cwiseMax(0.0).cwiseSqrt();
    out[b]->level = level;
    out[b]->method = BandMethod::theoretical;
    out[b]->lower = center - z * se;
    out[b]->upper = center + z * se;
  }
  return bands;
}

FixedEffectBands bootstrap_bands(const ModelFit& fit, const GeneDataset& data,
                                 const BootstrapOptions& opts) {
  if (opts.samples < 100)
    throw std::invalid_argument("bootstrap_bands: need at least 100 resamples");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw std::invalid_argument("bootstrap_bands: level must be in (0,1)");
  const Index n = static_cast<Index>(data.individuals.size());
  const Index m = data.grid.size();

  std::mt19937_64 engine(derive_seed(opts.seed, stable_hash(data.gene_id), RngStream::bootstrap));
  std::uniform_int_distribution<Index> pick_curve(0, n - 1);
  std::uniform_int_distribution<Index> pick_resid(0, fit.residuals.size() - 1);

  MatrixXd mu_draws(opts.samples, m), alpha_draws(opts.samples, m), beta_draws(opts.samples, m);
  int failures = 0;
  int kept = 0;
  for (int b = 0; b < opts.samples; ++b) {
    GeneDataset boot = data;
    for (auto& ind : boot.individuals) {
      const Index donor = pick_curve(engine);
      const double s = ind.gender == Gender::female ? 1.0 : -1.0;
      const double t = ind.age_group == AgeGroup::old ? 1.0 : -1.0;
      for (Index j = 0; j < ind.n_obs(); ++j) {
        const Index col = data.grid.locate(ind.obs_times[static_cast<size_t>(j)]);
        ind.values[j] = fit.mu[col] + s * fit.alpha[col] + t * fit.beta[col] +
                        fit.gamma(donor, col) + fit.residuals[pick_resid(engine)];
      }
    }
    try {
      EmOptions em = opts.em;
      ModelFit refit = fit_em(boot, fit.sp, em);
      mu_draws.row(kept) = refit.mu.transpose();
      alpha_draws.row(kept) = refit.alpha.transpose();
      beta_draws.row(kept) = refit.beta.transpose();
      ++kept;
    } catch (...) {
      ++failures;
    }
  }
  if (failures > opts.max_failure_rate * opts.samples)
    throw std::runtime_error("bootstrap_bands: " + std::to_string(failures) + " of " +
                             std::to_string(opts.samples) + " refits failed");

  auto band_from = [&](const MatrixXd& draws) {
    ConfidenceBand band;
    band.level = opts.level;
    band.method = BandMethod::bootstrap;
    band.lower.resize(m);
    band.upper.resize(m);
    const double alpha = 1.0 - opts.level;
    for (Index c = 0; c < m; ++c) {
      std::vector<double> col(static_cast<size_t>(kept));
      for (int r = 0; r < kept; ++r) col[static_cast<size_t>(r)] = draws(r, c);
      std::sort(col.begin(), col.end());
      band.lower[c] = empirical_quantile(col, alpha / 2.0);
      band.upper[c] = empirical_quantile(col, 1.0 - alpha / 2.0);
    }
    return band;
  };
  FixedEffectBands bands;
  bands.mu = band_from(mu_draws);
  bands.alpha = band_from(alpha_draws);
  bands.beta = band_from(beta_draws);
  return bands;
}

double effect_statistic(const ModelFit& fit, EffectKind effect) {
  switch (effect) {
    case EffectKind::gender: return l2_norm(NaturalCubicSpline(fit.grid, fit.alpha), 0);
    case EffectKind::age: return l2_norm(NaturalCubicSpline(fit.grid, fit.beta), 0);
    case EffectKind::temporal: return l2_norm(NaturalCubicSpline(fit.grid, fit.mu), 1);
  }
  throw std::logic_error("effect_statistic: unknown effect");
}

GeneDataset permute_labels(const GeneDataset& data, EffectKind effect, std::mt19937_64& engine) {
  if (effect == EffectKind::temporal)
    throw std::invalid_argument("permute_labels: temporal effect permutes times, not labels");
  GeneDataset out = data;
  const size_t n = out.individuals.size();
  auto label_of = [&](size_t i) {
    return effect == EffectKind::gender ? static_cast<int>(out.individuals[i].gender)
                                        : static_cast<int>(out.individuals[i].age_group);
  };
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = label_of(i);
  std::vector<int> shuffled = labels;
  for (int attempt = 0; attempt < 256; ++attempt) {
    std::shuffle(shuffled.begin(), shuffled.end(), engine);
    if (shuffled != labels) break;
  }
  for (size_t i = 0; i < n; ++i) {
    if (effect == EffectKind::gender)
      out.individuals[i].gender = static_cast<Gender>(shuffled[i]);
    else
      out.individuals[i].age_group = static_cast<AgeGroup>(shuffled[i]);
  }
  return out;
}

GeneDataset permute_times(const GeneDataset& data, std::mt19937_64& engine) {
  GeneDataset out = data;
  const Index m = out.grid.size();
  std::vector<Index> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), Index(0));
  do {
    std::shuffle(perm.begin(), perm.end(), engine);
  } while (std::is_sorted(perm.begin(), perm.end()));  // identity excluded; M >= 3
  for (auto& ind : out.individuals) {
    for (auto& t : ind.obs_times) t = out.grid.points()[perm[static_cast<size_t>(out.grid.locate(t))]];
  }
  return out;
}

NullPool build_null_pool(std::span<const GeneDataset> genes, std::span<const Smoothing> sp,
                         EffectKind effect, const NullPoolOptions& opts) {
  if (genes.empty()) throw std::invalid_argument("build_null_pool: no genes");
  if (genes.size() != sp.size())
    throw std::invalid_argument("build_null_pool: one smoothing pair per gene required");

  const RngStream stream = effect == EffectKind::gender     ? RngStream::permute_gender
                           : effect == EffectKind::age      ? RngStream::permute_age
                                                            : RngStream::permute_temporal;
  const std::int64_t total =
      static_cast<std::int64_t>(genes.size()) * opts.permutations_per_gene;
  std::vector<double> stats(static_cast<size_t>(total),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> ok(static_cast<size_t>(total), 0);

  parallel_for(total, opts.workers, [&](std::int64_t task) {
    const size_t g = static_cast<size_t>(task / opts.permutations_per_gene);
    const std::uint64_t draw = static_cast<std::uint64_t>(task % opts.permutations_per_gene);
    std::mt19937_64 engine =
        make_engine(opts.seed, stable_hash(genes[g].gene_id), stream, draw);
    try {
      GeneDataset permuted = effect == EffectKind::temporal
                                 ? permute_times(genes[g], engine)
                                 : permute_labels(genes[g], effect, engine);
      Smoothing use_sp = sp[g];
      if (opts.reselect) {
        SelectionOptions sel = opts.selection;
        sel.em = opts.em;
        use_sp = select(permuted, sel).best_sp;
      }
      ModelFit fit = fit_em(permuted, use_sp, opts.em);
      stats[static_cast<size_t>(task)] = effect_statistic(fit, effect);
      ok[static_cast<size_t>(task)] = 1;
    } catch (...) {
      // recorded as a failed fit below
    }
  });

  NullPool pool;
  pool.effect = effect;
  pool.permutations_per_gene = opts.permutations_per_gene;
  pool.seed = opts.seed;
  pool.statistics.reserve(static_cast<size_t>(total));
  pool.per_gene_statistics.resize(genes.size());
  for (std::int64_t i = 0; i < total; ++i) {
    if (ok[static_cast<size_t>(i)]) {
      pool.statistics.push_back(stats[static_cast<size_t>(i)]);
      pool.per_gene_statistics[static_cast<size_t>(i) / opts.permutations_per_gene].push_back(
          stats[static_cast<size_t>(i)]);
    } else {
      ++pool.failed_fits;
    }
  }
  if (pool.failed_fits > opts.max_failure_rate * static_cast<double>(total))
    throw std::runtime_error("build_null_pool: " + std::to_string(pool.failed_fits) + " of " +
                             std::to_string(total) + " permutation fits failed");
  return pool;
}

std::vector<double> empirical_pvalues(const std::vector<double>& observed, const NullPool& pool) {
  if (pool.statistics.empty()) throw std::invalid_argument("empirical_pvalues: empty null pool");
  std::vector<double> sorted = pool.statistics;
  std::sort(sorted.begin(), sorted.end());
  const double k = static_cast<double>(sorted.size());
  std::vector<double> p(observed.size());
  for (size_t i = 0; i < observed.size(); ++i) {
    if (!std::isfinite(observed[i])) {
      p[i] = 1.0;
      continue;
    }
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), observed[i]);
    const double n_ge = static_cast<double>(sorted.end() - it);
    p[i] = (1.0 + n_ge) / (1.0 + k);
  }
  return p;
}

std::vector<double> bh_fdr(const std::vector<double>& p_values) {
  const size_t m = p_values.size();
  std::vector<double> q(m);
  if (m == 0) return q;
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bh_fdr: p-value outside [0,1]");
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return p_values[a] < p_values[b]; });
  double running = std::numeric_limits<double>::infinity();
  for (size_t rank = m; rank-- > 0;) {
    const double value =
        static_cast<double>(m) * p_values[order[rank]] / static_cast<double>(rank + 1);
    running = std::min(running, value);
    q[order[rank]] = running;
  }
  return q;
}

}  // namespace fmix
