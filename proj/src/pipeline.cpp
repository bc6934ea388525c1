#include "fmix/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "fmix/csv.hpp"
#include "fmix/parallel.hpp"
#include "fmix/rng.hpp"
#include "fmix/simulate.hpp"
#include "fmix/stats.hpp"
#include "fmix/version.hpp"

namespace fmix {

namespace {

const char* kNan = "nan";

std::string band_method_name(BandMethod m) {
  return m == BandMethod::theoretical ? "theoretical" : "bootstrap";
}

std::string normalization_name(CurveNormalization n) {
  return n == CurveNormalization::subtract_first ? "subtract_first" : "none";
}

}  // namespace

void RunConfig::validate() const {
  if (permutations < 1) throw std::invalid_argument("config: permutations must be >= 1");
  if (!(fdr_level > 0 && fdr_level < 1))
    throw std::invalid_argument("config: fdr_level must be in (0,1)");
  if (!(confidence_level > 0 && confidence_level < 1))
    throw std::invalid_argument("config: confidence_level must be in (0,1)");
  if (n_grid < 2) throw std::invalid_argument("config: n_grid must be >= 2");
  if (simplex_budget < 0) throw std::invalid_argument("config: simplex_budget must be >= 0");
  if (!(em_tol > 0)) throw std::invalid_argument("config: em_tol must be > 0");
  if (em_max_iter < 1) throw std::invalid_argument("config: em_max_iter must be >= 1");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (bootstrap_samples < 100)
    throw std::invalid_argument("config: bootstrap_samples must be >= 100");
  if (fpca_max_components < 1)
    throw std::invalid_argument("config: fpca_max_components must be >= 1");
  if (!(fpca_variance_target > 0 && fpca_variance_target <= 1))
    throw std::invalid_argument("config: fpca_variance_target must be in (0,1]");
}

EmOptions RunConfig::em_options() const {
  EmOptions em;
  em.tol = em_tol;
  em.max_iter = em_max_iter;
  return em;
}

SelectionOptions RunConfig::selection_options() const {
  SelectionOptions sel;
  sel.criterion = criterion;
  sel.simplex_budget = simplex_budget;
  sel.em = em_options();
  return sel;
}

IngestResult ingest(const std::string& path, double age_cutoff) {
  CsvTable table = read_csv(path);
  if (table.rows.empty()) throw std::runtime_error("ingest: " + path + " has no data rows");

  const size_t col_gene = table.require("gene_id");
  const size_t col_subject = table.require("subject_id");
  const size_t col_gender = table.require("gender");
  const auto col_age_group = table.find("age_group");
  const auto col_age = table.find("age");
  if (!col_age_group && !col_age)
    throw std::runtime_error("ingest: need an 'age_group' or numeric 'age' column");
  const size_t col_day = table.require("day");
  const size_t col_value = table.require("value");
  const auto col_replicate = table.find("replicate");

  static const std::set<std::string> known = {"gene_id", "subject_id", "gender", "age_group",
                                              "age",     "day",        "value",  "replicate"};
  for (const auto& name : table.header)
    if (!known.count(name))
      throw std::runtime_error("ingest: unexpected column '" + name + "' (schema mismatch)");

  struct SubjectRows {
    Gender gender = Gender::female;
    AgeGroup age = AgeGroup::old;
    bool label_conflict = false;
    std::vector<double> days;
    std::vector<double> values;
  };
  std::map<std::string, std::map<std::string, SubjectRows>> genes;
  std::set<std::string> dup_keys;

  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string context = path + " line " + std::to_string(r + 2);
    const std::string& gene = row[col_gene];
    const std::string& subject = row[col_subject];
    if (gene.empty() || subject.empty())
      throw std::runtime_error("ingest: empty gene_id or subject_id in " + context);

    Gender gender;
    if (row[col_gender] == "M")
      gender = Gender::male;
    else if (row[col_gender] == "F")
      gender = Gender::female;
    else
      throw std::runtime_error("ingest: unknown gender '" + row[col_gender] + "' in " + context);

    AgeGroup age;
    if (col_age_group) {
      const std::string& label = row[*col_age_group];
      if (label == "young")
        age = AgeGroup::young;
      else if (label == "old")
        age = AgeGroup::old;
      else
        throw std::runtime_error("ingest: unknown age_group '" + label + "' in " + context);
    } else {
      age = parse_double(row[*col_age], context) <= age_cutoff ? AgeGroup::young : AgeGroup::old;
    }

    const double day = parse_double(row[col_day], context);
    const double value = parse_double(row[col_value], context);

    if (col_replicate) {
      std::string key = gene + '\x1f' + subject + '\x1f' + row[col_day] + '\x1f' +
                        row[*col_replicate];
      if (!dup_keys.insert(std::move(key)).second)
        throw std::runtime_error("ingest: duplicate (gene, subject, day, replicate) key in " +
                                 context);
    }

    SubjectRows& sr = genes[gene][subject];
    if (sr.days.empty()) {
      sr.gender = gender;
      sr.age = age;
    } else if (sr.gender != gender || sr.age != age) {
      sr.label_conflict = true;
    }
    sr.days.push_back(day);
    sr.values.push_back(value);
  }

  IngestResult out;
  for (auto& [gene_id, subjects] : genes) {
    std::string failure;
    std::vector<double> all_days;
    for (const auto& [subject_id, sr] : subjects) {
      if (sr.label_conflict)
        failure = "inconsistent gender/age labels for subject " + subject_id;
      all_days.insert(all_days.end(), sr.days.begin(), sr.days.end());
    }
    if (failure.empty() && subjects.size() < 2) failure = "fewer than 2 subjects";
    if (failure.empty()) {
      try {
        GeneDataset data;
        data.gene_id = gene_id;
        data.grid = TimeGrid::from_times(all_days);
        for (auto& [subject_id, sr] : subjects) {
          IndividualSeries ind;
          ind.subject_id = subject_id;
          ind.gender = sr.gender;
          ind.age_group = sr.age;
          ind.obs_times = sr.days;
          ind.values = Eigen::Map<const VectorXd>(sr.values.data(),
                                                  static_cast<Index>(sr.values.size()));
          data.individuals.push_back(std::move(ind));
        }
        out.genes.push_back(std::move(data));
        continue;
      } catch (const std::exception& e) {
        failure = e.what();
      }
    }
    out.failures.push_back({gene_id, failure});
  }
  return out;
}

FitBatch run_fit(const IngestResult& input, const RunConfig& config) {
  config.validate();
  FitBatch batch;
  batch.records.resize(input.genes.size());
  parallel_for(static_cast<std::int64_t>(input.genes.size()), config.workers,
               [&](std::int64_t g) {
                 const GeneDataset& data = input.genes[static_cast<size_t>(g)];
                 GeneFitRecord& rec = batch.records[static_cast<size_t>(g)];
                 rec.gene_id = data.gene_id;
                 try {
                   SelectionResult sel = select(data, config.selection_options());
                   ModelFit fit = fit_em(data, sel.best_sp, config.em_options());
                   if (config.band_method == BandMethod::theoretical) {
                     AssembledModel model(data, fit.vc, fit.sp);
                     rec.bands = theoretical_bands(model, config.confidence_level);
                   } else {
                     BootstrapOptions bo;
                     bo.samples = config.bootstrap_samples;
                     bo.level = config.confidence_level;
                     bo.seed = config.seed;
                     bo.em = config.em_options();
                     rec.bands = bootstrap_bands(fit, data, bo);
                   }
                   rec.selection = std::move(sel);
                   rec.fit = std::move(fit);
                 } catch (const std::exception& e) {
                   rec.status = e.what();
                 }
               });
  return batch;
}

TestOutputs run_tests(const IngestResult& input, const FitBatch& fits, const RunConfig& config) {
  config.validate();
  if (fits.records.size() != input.genes.size())
    throw std::invalid_argument("run_tests: fit batch does not match ingested genes");

  std::vector<size_t> ok_idx;
  for (size_t g = 0; g < fits.records.size(); ++g)
    if (fits.records[g].ok()) ok_idx.push_back(g);

  TestOutputs out;
  const EffectKind effects[3] = {EffectKind::gender, EffectKind::age, EffectKind::temporal};
  for (int e = 0; e < 3; ++e) {
    const EffectKind effect = effects[e];

    std::vector<GeneDataset> pool_genes;
    std::vector<Smoothing> pool_sp;
    for (size_t g : ok_idx) {
      pool_genes.push_back(input.genes[g]);
      pool_sp.push_back(fits.records[g].fit->sp);
    }

    NullPool pool;
    if (!pool_genes.empty()) {
      NullPoolOptions po;
      po.permutations_per_gene = config.permutations;
      po.seed = config.seed;
      po.workers = config.workers;
      po.em = config.em_options();
      po.reselect = config.reselect_null;
      po.selection = config.selection_options();
      pool = build_null_pool(pool_genes, pool_sp, effect, po);
      out.pool_sizes[e] = static_cast<int>(pool.statistics.size());
      out.pool_failures[e] = pool.failed_fits;
    }

    // Observed statistics for every reported gene; failed fits keep NaN and
    // map to p = 1.
    const size_t n_rows = fits.records.size() + input.failures.size();
    std::vector<double> observed(n_rows, std::numeric_limits<double>::quiet_NaN());
    std::vector<TestResult> rows(n_rows);
    for (size_t g = 0; g < fits.records.size(); ++g) {
      rows[g].gene_id = fits.records[g].gene_id;
      rows[g].effect = effect;
      rows[g].status = fits.records[g].status;
      if (fits.records[g].ok())
        observed[g] = effect_statistic(*fits.records[g].fit, effect);
    }
    for (size_t f = 0; f < input.failures.size(); ++f) {
      auto& row = rows[fits.records.size() + f];
      row.gene_id = input.failures[f].gene_id;
      row.effect = effect;
      row.status = input.failures[f].reason;
    }

    std::vector<double> p(n_rows, 1.0);
    if (!pool.statistics.empty()) {
      if (config.pooled_null) {
        p = empirical_pvalues(observed, pool);
      } else {
        // Per-gene nulls: each gene is compared only against its own draws.
        std::map<std::string, const std::vector<double>*> slices;
        for (size_t k = 0; k < pool_genes.size(); ++k)
          slices[pool_genes[k].gene_id] = &pool.per_gene_statistics[k];
        for (size_t g = 0; g < n_rows; ++g) {
          auto it = slices.find(rows[g].gene_id);
          if (it == slices.end() || !std::isfinite(observed[g]) || it->second->empty()) continue;
          const auto& s = *it->second;
          double n_ge = 0;
          for (double v : s) n_ge += v >= observed[g] ? 1.0 : 0.0;
          p[g] = (1.0 + n_ge) / (1.0 + static_cast<double>(s.size()));
        }
      }
    }
    const std::vector<double> q = bh_fdr(p);
    for (size_t g = 0; g < n_rows; ++g) {
      rows[g].statistic = observed[g];
      rows[g].p_value = p[g];
      rows[g].q_value = q[g];
    }

    std::stable_sort(rows.begin(), rows.end(), [](const TestResult& a, const TestResult& b) {
      const bool fa = std::isfinite(a.statistic), fb = std::isfinite(b.statistic);
      if (fa != fb) return fa;
      if (fa && a.statistic != b.statistic) return a.statistic > b.statistic;
      return a.gene_id < b.gene_id;
    });
    out.results.insert(out.results.end(), rows.begin(), rows.end());
  }
  return out;
}

FpcaOutputs run_fpca(const FitBatch& fits, const RunConfig& config) {
  config.validate();
  std::vector<const ModelFit*> converged;
  for (const auto& rec : fits.records)
    if (rec.ok() && rec.fit->converged) converged.push_back(&*rec.fit);

  // Keep the largest family of converged fits sharing one grid.
  std::vector<ModelFit> chosen;
  FpcaOutputs out;
  if (!converged.empty()) {
    std::map<std::vector<double>, std::vector<const ModelFit*>> by_grid;
    for (const ModelFit* fit : converged) {
      std::vector<double> key(fit->grid.points().data(),
                              fit->grid.points().data() + fit->grid.size());
      by_grid[key].push_back(fit);
    }
    const std::vector<const ModelFit*>* best = nullptr;
    for (const auto& [key, group] : by_grid)
      if (!best || group.size() > best->size()) best = &group;
    for (const ModelFit* fit : *best) chosen.push_back(*fit);
    out.excluded = static_cast<int>(converged.size() - chosen.size());
  }
  if (chosen.size() < 2)
    throw std::runtime_error("run_fpca: fewer than 2 converged genes on a common grid");

  CurveMatrix cm = discretize(chosen, config.n_grid, config.fpca_normalization);
  FpcaOptions fo;
  fo.variance_target = config.fpca_variance_target;
  fo.max_components = config.fpca_max_components;
  out.result = decompose(cm, fo);
  out.gene_ids = cm.gene_ids;
  return out;
}

namespace {

struct UnionGrid {
  std::vector<double> points;
  // union index of a gene's design point, matched within the snap tolerance
  Index find(double t) const {
    for (size_t i = 0; i < points.size(); ++i)
      if (std::abs(points[i] - t) <= kTimeSnapTol) return static_cast<Index>(i);
    return -1;
  }
};

UnionGrid union_grid(const IngestResult& input) {
  UnionGrid u;
  std::vector<double> all;
  for (const auto& g : input.genes)
    all.insert(all.end(), g.grid.points().data(), g.grid.points().data() + g.grid.size());
  if (all.empty()) return u;
  std::sort(all.begin(), all.end());
  for (double t : all)
    if (u.points.empty() || t - u.points.back() > kTimeSnapTol) u.points.push_back(t);
  return u;
}

}  // namespace

void write_fits_csv(const std::string& path, const IngestResult& input, const FitBatch& fits) {
  const UnionGrid grid = union_grid(input);
  CsvTable table;
  table.header = {"gene_id",   "status",          "converged",    "em_iterations",
                  "lambda",    "lambda_gamma",    "criterion_value", "loglik",
                  "df_fixed",  "df_random",       "df_total",     "sigma2",
                  "sigma2_floored", "ridge_applied"};
  for (const char* curve : {"mu", "alpha", "beta"})
    for (double t : grid.points) {
      table.header.push_back(std::string(curve) + "_" + format_double(t));
      table.header.push_back(std::string(curve) + "_lo_" + format_double(t));
      table.header.push_back(std::string(curve) + "_hi_" + format_double(t));
    }
  for (size_t r = 0; r < grid.points.size(); ++r)
    for (size_t s = r; s < grid.points.size(); ++s)
      table.header.push_back("d_" + format_double(grid.points[r]) + "_" +
                             format_double(grid.points[s]));

  const size_t width = table.header.size();
  auto blank_row = [&](const std::string& gene_id, const std::string& status) {
    std::vector<std::string> row(width, kNan);
    row[0] = gene_id;
    row[1] = status;
    return row;
  };

  // Merge fitted records and ingest failures in gene-id order.
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (size_t g = 0; g < fits.records.size(); ++g) {
    const GeneFitRecord& rec = fits.records[g];
    std::vector<std::string> row = blank_row(rec.gene_id, rec.status);
    if (rec.ok()) {
      const ModelFit& fit = *rec.fit;
      row[2] = fit.converged ? "1" : "0";
      row[3] = std::to_string(fit.em_iterations);
      row[4] = format_double(fit.sp.lambda);
      row[5] = format_double(fit.sp.lambda_gamma);
      row[6] = rec.selection ? format_double(rec.selection->criterion_value) : kNan;
      row[7] = format_double(fit.loglik);
      row[8] = format_double(fit.df_fixed);
      row[9] = format_double(fit.df_random);
      row[10] = format_double(fit.df_total());
      row[11] = format_double(fit.vc.sigma2);
      row[12] = fit.sigma2_floored ? "1" : "0";
      row[13] = fit.ridge_applied ? "1" : "0";

      const TimeGrid& gg = input.genes[g].grid;
      std::vector<Index> to_union(static_cast<size_t>(gg.size()));
      for (Index m = 0; m < gg.size(); ++m) to_union[static_cast<size_t>(m)] = grid.find(gg.points()[m]);

      size_t col = 14;
      const VectorXd* curves[3] = {&fit.mu, &fit.alpha, &fit.beta};
      const ConfidenceBand* bands[3] = {nullptr, nullptr, nullptr};
      if (rec.bands) {
        bands[0] = &rec.bands->mu;
        bands[1] = &rec.bands->alpha;
        bands[2] = &rec.bands->beta;
      }
      for (int c = 0; c < 3; ++c) {
        std::vector<std::string> val(grid.points.size(), kNan), lo(grid.points.size(), kNan),
            hi(grid.points.size(), kNan);
        for (Index m = 0; m < gg.size(); ++m) {
          const Index u = to_union[static_cast<size_t>(m)];
          val[static_cast<size_t>(u)] = format_double((*curves[c])[m]);
          if (bands[c]) {
            lo[static_cast<size_t>(u)] = format_double(bands[c]->lower[m]);
            hi[static_cast<size_t>(u)] = format_double(bands[c]->upper[m]);
          }
        }
        for (size_t u = 0; u < grid.points.size(); ++u) {
          row[col++] = val[u];
          row[col++] = lo[u];
          row[col++] = hi[u];
        }
      }
      // D on the union layout
      std::map<std::pair<Index, Index>, double> d_entries;
      for (Index r = 0; r < gg.size(); ++r)
        for (Index s = r; s < gg.size(); ++s) {
          Index ur = to_union[static_cast<size_t>(r)], us = to_union[static_cast<size_t>(s)];
          d_entries[{std::min(ur, us), std::max(ur, us)}] = fit.vc.D(r, s);
        }
      for (size_t r = 0; r < grid.points.size(); ++r)
        for (size_t s = r; s < grid.points.size(); ++s) {
          auto it = d_entries.find({static_cast<Index>(r), static_cast<Index>(s)});
          row[col++] = it == d_entries.end() ? kNan : format_double(it->second);
        }
    }
    rows.emplace_back(rec.gene_id, std::move(row));
  }
  for (const auto& f : input.failures) rows.emplace_back(f.gene_id, blank_row(f.gene_id, f.reason));
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [id, row] : rows) table.rows.push_back(std::move(row));
  write_csv(path, table);
}

void write_diagnostics_csv(const std::string& path, const IngestResult& input,
                           const FitBatch& fits) {
  CsvTable table;
  table.header = {"gene_id", "subject_id", "obs_index",    "time",          "observed",
                  "fitted",  "residual",   "std_residual", "qq_theoretical"};
  for (size_t g = 0; g < fits.records.size(); ++g) {
    const GeneFitRecord& rec = fits.records[g];
    if (!rec.ok()) continue;
    const ModelFit& fit = *rec.fit;
    const GeneDataset& data = input.genes[g];
    const double sigma = std::sqrt(fit.vc.sigma2);
    const Index n_obs = fit.residuals.size();

    std::vector<Index> rank(static_cast<size_t>(n_obs));
    std::iota(rank.begin(), rank.end(), Index(0));
    std::stable_sort(rank.begin(), rank.end(),
                     [&](Index a, Index b) { return fit.residuals[a] < fit.residuals[b]; });
    VectorXd qq(n_obs);
    for (Index r = 0; r < n_obs; ++r)
      qq[rank[static_cast<size_t>(r)]] =
          normal_quantile((static_cast<double>(r) + 0.5) / static_cast<double>(n_obs));

    Index pos = 0;
    for (const auto& ind : data.individuals) {
      for (Index j = 0; j < ind.n_obs(); ++j, ++pos) {
        table.rows.push_back({data.gene_id, ind.subject_id, std::to_string(pos),
                              format_double(ind.obs_times[static_cast<size_t>(j)]),
                              format_double(ind.values[j]), format_double(fit.fitted[pos]),
                              format_double(fit.residuals[pos]),
                              format_double(fit.residuals[pos] / sigma),
                              format_double(qq[pos])});
      }
    }
  }
  write_csv(path, table);
}

void write_tests_csv(const std::string& path, const TestOutputs& tests, double fdr_level) {
  CsvTable table;
  table.header = {"effect", "gene_id", "statistic", "p_value", "q_value", "significant", "status"};
  for (const auto& row : tests.results) {
    table.rows.push_back({to_string(row.effect), row.gene_id, format_double(row.statistic),
                          format_double(row.p_value), format_double(row.q_value),
                          row.q_value <= fdr_level ? "1" : "0", row.status});
  }
  write_csv(path, table);
}

void write_fpca_csvs(const std::string& dir, const FpcaOutputs& fpca) {
  if (!fpca.result) return;
  const FpcaResult& res = *fpca.result;
  const Index k = res.components.cols();

  CsvTable comp;
  comp.header = {"time", "mean"};
  for (Index c = 0; c < k; ++c) comp.header.push_back("pc" + std::to_string(c + 1));
  for (Index r = 0; r < res.grid.size(); ++r) {
    std::vector<std::string> row = {format_double(res.grid[r]), format_double(res.mean_curve[r])};
    for (Index c = 0; c < k; ++c) row.push_back(format_double(res.components(r, c)));
    comp.rows.push_back(std::move(row));
  }
  write_csv(dir + "/fpca_components.csv", comp);

  CsvTable eig;
  eig.header = {"component", "eigenvalue", "explained_fraction", "cumulative_fraction"};
  double cumulative = 0;
  for (Index c = 0; c < k; ++c) {
    cumulative += res.explained[c];
    eig.rows.push_back({std::to_string(c + 1), format_double(res.eigenvalues[c]),
                        format_double(res.explained[c]), format_double(cumulative)});
  }
  write_csv(dir + "/fpca_eigenvalues.csv", eig);

  CsvTable load;
  load.header = {"gene_id"};
  for (Index c = 0; c < k; ++c) load.header.push_back("pc" + std::to_string(c + 1));
  for (size_t g = 0; g < fpca.gene_ids.size(); ++g) {
    std::vector<std::string> row = {fpca.gene_ids[g]};
    for (Index c = 0; c < k; ++c)
      row.push_back(format_double(res.loadings(static_cast<Index>(g), c)));
    load.rows.push_back(std::move(row));
  }
  write_csv(dir + "/fpca_loadings.csv", load);
}

void write_manifest(const std::string& path, const RunConfig& config,
                    const PipelineResult& result) {
  nlohmann::json j;
  j["config"] = {
      {"input_path", config.input_path},
      {"output_dir", config.output_dir},
      {"criterion", to_string(config.criterion)},
      {"permutations", config.permutations},
      {"fdr_level", config.fdr_level},
      {"confidence_level", config.confidence_level},
      {"band_method", band_method_name(config.band_method)},
      {"bootstrap_samples", config.bootstrap_samples},
      {"n_grid", config.n_grid},
      {"fpca_normalization", normalization_name(config.fpca_normalization)},
      {"fpca_variance_target", config.fpca_variance_target},
      {"fpca_max_components", config.fpca_max_components},
      {"simplex_budget", config.simplex_budget},
      {"em_tol", config.em_tol},
      {"em_max_iter", config.em_max_iter},
      {"seed", config.seed},
      {"workers", config.workers},
      {"age_cutoff", config.age_cutoff},
      {"reselect_null", config.reselect_null},
      {"pooled_null", config.pooled_null},
  };
  j["versions"] = {
      {"fmix", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                    "." + std::to_string(EIGEN_MINOR_VERSION)},
  };
  int fit_ok = 0;
  for (const auto& rec : result.fits.records) fit_ok += rec.ok() ? 1 : 0;
  j["counts"] = {
      {"genes", result.input.genes.size()},
      {"ingest_failures", result.input.failures.size()},
      {"fit_ok", fit_ok},
      {"fit_failed", result.fits.records.size() - static_cast<size_t>(fit_ok)},
  };
  if (result.tests) {
    j["tests"] = {
        {"pool_sizes", result.tests->pool_sizes},
        {"pool_failures", result.tests->pool_failures},
    };
  }
  if (result.fpca && result.fpca->result) {
    j["fpca"] = {
        {"components", result.fpca->result->components.cols()},
        {"genes", result.fpca->gene_ids.size()},
        {"excluded", result.fpca->excluded},
    };
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

PipelineResult run_pipeline(const RunConfig& config, bool with_tests, bool with_fpca) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  PipelineResult result;
  result.input = ingest(config.input_path, config.age_cutoff);
  result.fits = run_fit(result.input, config);
  bool any_ok = false;
  for (const auto& rec : result.fits.records) any_ok |= rec.ok();
  if (!result.fits.records.empty() && !any_ok)
    throw std::runtime_error("run_pipeline: all " + std::to_string(result.fits.records.size()) +
                             " genes failed to fit");

  write_fits_csv(config.output_dir + "/fits.csv", result.input, result.fits);
  write_diagnostics_csv(config.output_dir + "/diagnostics.csv", result.input, result.fits);

  if (with_tests) {
    result.tests = run_tests(result.input, result.fits, config);
    write_tests_csv(config.output_dir + "/tests.csv", *result.tests, config.fdr_level);
  }
  if (with_fpca) {
    result.fpca = run_fpca(result.fits, config);
    write_fpca_csvs(config.output_dir, *result.fpca);
  }
  write_manifest(config.output_dir + "/run_manifest.json", config, result);
  return result;
}

void simulate_batch(const SimulateConfig& config) {
  if (config.genes < 1) throw std::invalid_argument("simulate: genes must be >= 1");
  if (config.individuals < 4)
    throw std::invalid_argument("simulate: need at least 4 individuals to cover both factors");
  if (config.days.size() < 3) throw std::invalid_argument("simulate: need at least 3 days");
  if (!(config.missing_rate >= 0 && config.missing_rate < 1))
    throw std::invalid_argument("simulate: missing_rate must be in [0,1)");

  TimeGrid grid = TimeGrid::from_times(config.days);
  const Index m = grid.size();
  const double span = grid.span();
  const double length = config.curve_length > 0 ? config.curve_length : span / 2.0;

  MatrixXd d(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index s = 0; s < m; ++s) {
      const double dt = grid.points()[r] - grid.points()[s];
      d(r, s) = config.curve_scale * std::exp(-dt * dt / (2.0 * length * length));
    }

  int digits = 1;
  for (int g = config.genes; g >= 10; g /= 10) ++digits;

  CsvTable table;
  table.header = {"gene_id", "subject_id", "gender", "age_group", "day", "value"};
  for (int g = 0; g < config.genes; ++g) {
    std::string id = std::to_string(g + 1);
    id = "g" + std::string(static_cast<size_t>(digits) - id.size(), '0') + id;

    SimulationSpec spec;
    spec.gene_id = id;
    spec.grid = grid;
    spec.n_individuals = config.individuals;
    spec.d_true = d;
    spec.sigma2_true = config.sigma2;
    spec.seed = derive_seed(config.seed, stable_hash(id), RngStream::simulate);
    const double t0 = grid.front();
    if (g < static_cast<int>(std::ceil(config.gender_fraction * config.genes))) {
      const double amp = config.gender_effect;
      spec.alpha = [amp](double) { return amp; };
    }
    if (g < static_cast<int>(std::ceil(config.age_fraction * config.genes))) {
      const double amp = config.age_effect;
      spec.beta = [amp](double) { return amp; };
    }
    if (g < static_cast<int>(std::ceil(config.temporal_fraction * config.genes))) {
      const double amp = config.temporal_effect;
      spec.mu = [amp, t0, span](double t) { return amp * (t - t0) / span; };
    }
    if (config.missing_rate > 0) {
      std::mt19937_64 engine(derive_seed(config.seed, stable_hash(id), RngStream::simulate, 1));
      std::bernoulli_distribution drop(config.missing_rate);
      for (int i = 0; i < config.individuals; ++i) {
        int dropped = 0;
        for (Index r = 0; r < m; ++r)
          if (drop(engine) && dropped + 1 < m) {
            spec.missing.push_back({i, static_cast<int>(r)});
            ++dropped;
          }
      }
    }

    SimulatedGene sim = generate(spec);
    for (const auto& ind : sim.data.individuals) {
      for (Index j = 0; j < ind.n_obs(); ++j) {
        table.rows.push_back({id, ind.subject_id,
                              ind.gender == Gender::male ? "M" : "F",
                              ind.age_group == AgeGroup::young ? "young" : "old",
                              format_double(ind.obs_times[static_cast<size_t>(j)]),
                              format_double(ind.values[j])});
      }
    }
  }
  write_csv(config.output_path, table);
}

}  // namespace fmix
