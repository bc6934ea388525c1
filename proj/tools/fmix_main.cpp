// fmix: batch fitting, testing and functional PCA for replicated
// gene-expression time series.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <string>

#include "fmix/pipeline.hpp"
#include "fmix/version.hpp"

namespace {

void add_run_options(CLI::App* cmd, fmix::RunConfig& config, std::string& criterion,
                     std::string& band_method, std::string& normalization) {
  cmd->add_option("-i,--input", config.input_path, "Input CSV path")->required();
  cmd->add_option("-o,--output-dir", config.output_dir, "Output directory");
  cmd->add_option("--criterion", criterion, "Model selection criterion: BIC or AIC")
      ->check(CLI::IsMember({"BIC", "AIC", "bic", "aic"}));
  cmd->add_option("--permutations", config.permutations, "Permutations per gene");
  cmd->add_option("--fdr", config.fdr_level, "FDR control level");
  cmd->add_option("--confidence", config.confidence_level, "Confidence band level");
  cmd->add_option("--band-method", band_method, "Band method: theoretical or bootstrap")
      ->check(CLI::IsMember({"theoretical", "bootstrap"}));
  cmd->add_option("--bootstrap-samples", config.bootstrap_samples, "Bootstrap resamples");
  cmd->add_option("--n-grid", config.n_grid, "fPCA discretization grid size");
  cmd->add_option("--fpca-normalization", normalization,
                  "Curve normalization: subtract_first or none")
      ->check(CLI::IsMember({"subtract_first", "none"}));
  cmd->add_option("--fpca-variance-target", config.fpca_variance_target,
                  "Retained cumulative variance fraction");
  cmd->add_option("--fpca-max-components", config.fpca_max_components, "Component cap");
  cmd->add_option("--simplex-budget", config.simplex_budget, "Nelder-Mead iterations");
  cmd->add_option("--em-tol", config.em_tol, "EM relative convergence tolerance");
  cmd->add_option("--em-max-iter", config.em_max_iter, "EM iteration cap");
  cmd->add_option("--seed", config.seed, "Master seed");
  cmd->add_option("--workers", config.workers, "Worker threads");
  cmd->add_option("--age-cutoff", config.age_cutoff,
                  "Age <= cutoff maps to 'young' when an 'age' column is used");
  cmd->add_flag("--reselect-null", config.reselect_null,
                "Re-select smoothing parameters inside every permutation");
  cmd->add_flag("--per-gene-null{false}", config.pooled_null,
                "Use per-gene null distributions instead of the pooled null");
}

void finish_config(fmix::RunConfig& config, const std::string& criterion,
                   const std::string& band_method, const std::string& normalization) {
  config.criterion = fmix::criterion_from_string(criterion);
  config.band_method = band_method == "bootstrap" ? fmix::BandMethod::bootstrap
                                                  : fmix::BandMethod::theoretical;
  config.fpca_normalization = normalization == "none" ? fmix::CurveNormalization::none
                                                      : fmix::CurveNormalization::subtract_first;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional mixed-effects modeling of replicated time series"};
  app.set_version_flag("--version", fmix::kVersion);
  app.set_config("--config", "", "Config file (TOML/INI keys matching the long options)");
  app.require_subcommand(1);

  fmix::RunConfig config;
  std::string criterion = "BIC", band_method = "theoretical", normalization = "subtract_first";

  CLI::App* fit = app.add_subcommand("fit", "Fit every gene: selection, EM, bands, diagnostics");
  CLI::App* test = app.add_subcommand("test", "Fit plus permutation tests with FDR control");
  CLI::App* fpca = app.add_subcommand("fpca", "Fit plus functional PCA of the mean curves");
  CLI::App* all = app.add_subcommand("all", "Full pipeline: fit, test and fPCA");
  for (CLI::App* cmd : {fit, test, fpca, all})
    add_run_options(cmd, config, criterion, band_method, normalization);

  fmix::SimulateConfig sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Write a synthetic input CSV");
  simulate->add_option("-o,--out", sim.output_path, "Output CSV path")->required();
  simulate->add_option("--genes", sim.genes, "Number of genes");
  simulate->add_option("--individuals", sim.individuals, "Individuals per gene");
  simulate->add_option("--days", sim.days, "Design time points (days)")->expected(3, 1000);
  simulate->add_option("--sigma2", sim.sigma2, "Noise variance");
  simulate->add_option("--curve-scale", sim.curve_scale, "Random-curve covariance magnitude");
  simulate->add_option("--curve-length", sim.curve_length,
                       "Covariance kernel length scale (0 = half the span)");
  simulate->add_option("--gender-effect", sim.gender_effect, "Constant gender-effect amplitude");
  simulate->add_option("--gender-fraction", sim.gender_fraction, "Fraction of genes affected");
  simulate->add_option("--age-effect", sim.age_effect, "Constant age-effect amplitude");
  simulate->add_option("--age-fraction", sim.age_fraction, "Fraction of genes affected");
  simulate->add_option("--temporal-effect", sim.temporal_effect, "Linear trend amplitude");
  simulate->add_option("--temporal-fraction", sim.temporal_fraction, "Fraction of genes affected");
  simulate->add_option("--missing-rate", sim.missing_rate, "Per-observation dropout rate");
  simulate->add_option("--seed", sim.seed, "Master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      fmix::simulate_batch(sim);
      return 0;
    }
    finish_config(config, criterion, band_method, normalization);
    const bool with_tests = test->parsed() || all->parsed();
    const bool with_fpca = fpca->parsed() || all->parsed();
    fmix::run_pipeline(config, with_tests, with_fpca);
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}
