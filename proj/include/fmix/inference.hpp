#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fmix/estimation.hpp"
#include "fmix/selection.hpp"

namespace fmix {

enum class EffectKind { gender, age, temporal };

std::string to_string(EffectKind e);

enum class BandMethod { theoretical, bootstrap };

/// Pointwise confidence band for one fixed-effect curve at the design points.
struct ConfidenceBand {
  double level = 0.95;
  VectorXd lower, upper;
  BandMethod method = BandMethod::theoretical;
};

struct FixedEffectBands {
  ConfidenceBand mu, alpha, beta;
};

/// Bands from the sandwich covariance of the penalized estimator; the center
/// curves are the current penalized estimates.
FixedEffectBands theoretical_bands(const AssembledModel& model, double level);

struct BootstrapOptions {
  int samples = 200;
  double level = 0.95;
  std::uint64_t seed = 0;
  EmOptions em;
  /// Abort when more than this fraction of refits fail.
  double max_failure_rate = 0.05;
};

/// Bands from refitting datasets rebuilt by resampling fitted individual
/// curves and residuals with replacement. Smoothing parameters stay fixed at
/// the fit's values.
FixedEffectBands bootstrap_bands(const ModelFit& fit, const GeneDataset& data,
                                 const BootstrapOptions& opts);

/// L2-norm test statistic: size of the gender/age effect curve, or of the
/// first derivative of the mean curve for the temporal effect.
double effect_statistic(const ModelFit& fit, EffectKind effect);

/// Returns a copy of the dataset with the individual-to-label assignment of
/// the tested factor permuted (label counts preserved); redraws so the
/// assignment differs from the original whenever possible.
GeneDataset permute_labels(const GeneDataset& data, EffectKind effect, std::mt19937_64& engine);

/// Returns a copy with one random non-identity permutation of the design-point
/// identities applied to every individual's observation times.
GeneDataset permute_times(const GeneDataset& data, std::mt19937_64& engine);

/// Null statistics pooled across genes and permutations.
struct NullPool {
  EffectKind effect = EffectKind::gender;
  std::vector<double> statistics;
  int permutations_per_gene = 0;
  std::uint64_t seed = 0;
  int failed_fits = 0;
  /// Same statistics sliced per input gene (for the per-gene null variant).
  std::vector<std::vector<double>> per_gene_statistics;
};

struct NullPoolOptions {
  int permutations_per_gene = 32;
  std::uint64_t seed = 0;
  int workers = 1;
  EmOptions em;
  /// Re-select smoothing parameters for every permutation instead of reusing
  /// the observed-data selection.
  bool reselect = false;
  SelectionOptions selection;  // used only when reselect is true
  /// Hard error when more than this fraction of permutation fits fail.
  double max_failure_rate = 0.10;
};

/// Builds the pooled null distribution for one effect: every gene is permuted
/// permutations_per_gene times and refit at its own smoothing parameters
/// (sp[g]). Draws are seeded per (gene id, permutation index) so results are
/// independent of gene order and worker count.
NullPool build_null_pool(std::span<const GeneDataset> genes, std::span<const Smoothing> sp,
                         EffectKind effect, const NullPoolOptions& opts);

/// Empirical p-values against the pooled null with add-one correction:
/// p = (1 + #{null >= observed}) / (1 + pool size). Non-finite observed
/// statistics (failed fits) map to p = 1.
std::vector<double> empirical_pvalues(const std::vector<double>& observed, const NullPool& pool);

/// Benjamini-Hochberg step-up q-values, stable under ties.
std::vector<double> bh_fdr(const std::vector<double>& p_values);

/// One gene x effect test row.
struct TestResult {
  std::string gene_id;
  EffectKind effect = EffectKind::gender;
  double statistic = 0.0;
  double p_value = 1.0;
  double q_value = 1.0;
  std::string status = "ok";
};

}  // namespace fmix
