#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmix/fpca.hpp"
#include "fmix/inference.hpp"
#include "fmix/selection.hpp"

namespace fmix {

/// Batch-run configuration; field defaults follow the reference protocol
/// (BIC, 32 permutations per gene, FDR 10%, 1000-point fPCA grid, 100
/// simplex iterations).
struct RunConfig {
  std::string input_path;
  std::string output_dir = ".";
  Criterion criterion = Criterion::bic;
  int permutations = 32;
  double fdr_level = 0.10;
  double confidence_level = 0.95;
  BandMethod band_method = BandMethod::theoretical;
  int bootstrap_samples = 200;
  int n_grid = 1000;
  CurveNormalization fpca_normalization = CurveNormalization::subtract_first;
  double fpca_variance_target = 0.999;
  int fpca_max_components = 10;
  int simplex_budget = 100;
  double em_tol = 1e-6;
  int em_max_iter = 200;
  std::uint64_t seed = 0;
  int workers = 8;
  double age_cutoff = 55.0;
  /// Re-select smoothing parameters inside every null permutation instead of
  /// reusing the observed-data selection (much slower).
  bool reselect_null = false;
  /// Pool null statistics across genes (default) or keep them per gene.
  bool pooled_null = true;

  void validate() const;
  EmOptions em_options() const;
  SelectionOptions selection_options() const;
};

struct FailedGene {
  std::string gene_id;
  std::string reason;
};

struct IngestResult {
  std::vector<GeneDataset> genes;     // sorted by gene_id
  std::vector<FailedGene> failures;   // structurally unusable genes
};

/// Parses the input CSV (columns gene_id, subject_id, gender, age_group or
/// age, day, value, optional replicate) into per-gene datasets. File-level
/// schema problems throw; per-gene structural problems are isolated into
/// `failures`.
IngestResult ingest(const std::string& path, double age_cutoff = 55.0);

struct GeneFitRecord {
  std::string gene_id;
  std::string status = "ok";
  std::optional<SelectionResult> selection;
  std::optional<ModelFit> fit;
  std::optional<FixedEffectBands> bands;
  bool ok() const { return fit.has_value(); }
};

struct FitBatch {
  std::vector<GeneFitRecord> records;  // records[i] corresponds to input.genes[i]
};

/// Smoothing selection plus final fit and confidence bands for every gene;
/// per-gene failures are captured in the record status.
FitBatch run_fit(const IngestResult& input, const RunConfig& config);

/// Null pools, observed statistics, empirical p-values and q-values for the
/// gender, age and temporal effects.
struct TestOutputs {
  std::vector<TestResult> results;  // grouped by effect, ranked by statistic
  int pool_sizes[3] = {0, 0, 0};
  int pool_failures[3] = {0, 0, 0};
};

TestOutputs run_tests(const IngestResult& input, const FitBatch& fits, const RunConfig& config);

struct FpcaOutputs {
  std::optional<FpcaResult> result;
  std::vector<std::string> gene_ids;  // rows of the loadings matrix
  int excluded = 0;                   // converged fits left out (grid mismatch)
};

FpcaOutputs run_fpca(const FitBatch& fits, const RunConfig& config);

struct PipelineResult {
  IngestResult input;
  FitBatch fits;
  std::optional<TestOutputs> tests;
  std::optional<FpcaOutputs> fpca;
};

/// Runs ingest + fit (+ tests, + fPCA) and writes every computed table plus
/// the run manifest into config.output_dir.
PipelineResult run_pipeline(const RunConfig& config, bool with_tests, bool with_fpca);

// Table writers (also used by run_pipeline).
void write_fits_csv(const std::string& path, const IngestResult& input, const FitBatch& fits);
void write_diagnostics_csv(const std::string& path, const IngestResult& input,
                           const FitBatch& fits);
void write_tests_csv(const std::string& path, const TestOutputs& tests, double fdr_level);
void write_fpca_csvs(const std::string& dir, const FpcaOutputs& fpca);
void write_manifest(const std::string& path, const RunConfig& config,
                    const PipelineResult& result);

/// Batch simulation driven by the run seed: writes an input-schema CSV.
struct SimulateConfig {
  std::string output_path;
  int genes = 100;
  int individuals = 22;
  std::vector<double> days = {1, 14, 28, 90, 180};
  double sigma2 = 0.25;
  double curve_scale = 0.5;     // random-curve covariance magnitude
  double curve_length = 0.0;    // kernel length scale; 0 = half the span
  double gender_effect = 0.0;   // constant alpha amplitude for affected genes
  double gender_fraction = 0.0;
  double age_effect = 0.0;
  double age_fraction = 0.0;
  double temporal_effect = 0.0;  // linear trend amplitude for affected genes
  double temporal_fraction = 0.0;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
};

void simulate_batch(const SimulateConfig& config);

}  // namespace fmix
