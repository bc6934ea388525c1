#pragma once

#include <random>
#include <vector>

#include "fmix/model.hpp"
#include "fmix/simulate.hpp"

namespace fmix::test {

inline TimeGrid random_grid(std::mt19937_64& engine, Index m, double lo = 0.5, double hi = 2.0) {
  std::uniform_real_distribution<double> step(lo, hi);
  VectorXd pts(m);
  pts[0] = 0.0;
  for (Index r = 1; r < m; ++r) pts[r] = pts[r - 1] + step(engine);
  return TimeGrid(pts);
}

inline MatrixXd random_spd(std::mt19937_64& engine, Index m, double scale = 1.0) {
  std::normal_distribution<double> normal;
  MatrixXd a(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < m; ++c) a(r, c) = normal(engine);
  return scale * (a * a.transpose() / static_cast<double>(m)) +
         0.05 * scale * MatrixXd::Identity(m, m);
}

struct RandomDataOptions {
  Index n = 4;
  Index m = 4;
  double miss_prob = 0.0;
  double dup_prob = 0.0;
  double value_scale = 1.0;
};

/// Random dataset with both levels of both factors present (labels cycle
/// through the four combinations).
inline GeneDataset random_dataset(std::mt19937_64& engine, const RandomDataOptions& opts = {}) {
  GeneDataset data;
  data.gene_id = "test";
  data.grid = random_grid(engine, opts.m);
  std::normal_distribution<double> normal(0.0, opts.value_scale);
  std::uniform_real_distribution<double> unif;
  static const std::pair<Gender, AgeGroup> cycle[4] = {
      {Gender::female, AgeGroup::old},
      {Gender::male, AgeGroup::young},
      {Gender::female, AgeGroup::young},
      {Gender::male, AgeGroup::old},
  };
  for (Index i = 0; i < opts.n; ++i) {
    IndividualSeries ind;
    ind.subject_id = "s" + std::to_string(i + 1);
    ind.gender = cycle[i % 4].first;
    ind.age_group = cycle[i % 4].second;
    std::vector<double> values;
    for (Index r = 0; r < opts.m; ++r) {
      if (unif(engine) < opts.miss_prob && r > 0) continue;  // keep the first point
      int copies = unif(engine) < opts.dup_prob ? 2 : 1;
      for (int c = 0; c < copies; ++c) {
        ind.obs_times.push_back(data.grid.points()[r]);
        values.push_back(normal(engine));
      }
    }
    ind.values = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
    data.individuals.push_back(std::move(ind));
  }
  return data;
}

}  // namespace fmix::test
