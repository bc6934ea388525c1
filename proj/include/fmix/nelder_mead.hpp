#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

namespace fmix {

struct NelderMeadOptions {
  int max_iter = 100;
  double initial_step = 1.0;
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Stop early when the simplex function spread falls below this (absolute);
  /// 0 runs the full budget.
  double f_spread_tol = 0.0;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Plain Nelder-Mead simplex minimization. Deterministic: the initial simplex
/// is x0 plus a step along each coordinate, and ties resolve by index.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& opts = {}) {
  const int dim = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> verts(static_cast<size_t>(dim) + 1, x0);
  for (int i = 0; i < dim; ++i) verts[static_cast<size_t>(i) + 1][i] += opts.initial_step;

  NelderMeadResult res;
  std::vector<double> fv(verts.size());
  for (size_t i = 0; i < verts.size(); ++i) {
    fv[i] = f(verts[i]);
    ++res.evaluations;
  }
  std::vector<size_t> order(verts.size());

  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return fv[a] < fv[b]; });
  };

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    sort_simplex();
    const size_t best = order.front(), worst = order.back(), second_worst = order[dim > 0 ? order.size() - 2 : 0];
    if (opts.f_spread_tol > 0 && fv[worst] - fv[best] <= opts.f_spread_tol) break;
    ++res.iterations;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (size_t i = 0; i < order.size(); ++i)
      if (order[i] != worst) centroid += verts[order[i]];
    centroid /= static_cast<double>(dim);

    auto eval = [&](const Eigen::VectorXd& x) {
      ++res.evaluations;
      return f(x);
    };

    const Eigen::VectorXd reflected = centroid + opts.reflection * (centroid - verts[worst]);
    const double fr = eval(reflected);
    if (fr < fv[best]) {
      const Eigen::VectorXd expanded = centroid + opts.expansion * (reflected - centroid);
      const double fe = eval(expanded);
      if (fe < fr) {
        verts[worst] = expanded;
        fv[worst] = fe;
      } else {
        verts[worst] = reflected;
        fv[worst] = fr;
      }
    } else if (fr < fv[second_worst]) {
      verts[worst] = reflected;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const Eigen::VectorXd pivot = outside ? reflected : verts[worst];
      const Eigen::VectorXd contracted = centroid + opts.contraction * (pivot - centroid);
      const double fc = eval(contracted);
      if (fc < std::min(fr, fv[worst])) {
        verts[worst] = contracted;
        fv[worst] = fc;
      } else {
        for (size_t i = 0; i < order.size(); ++i) {
          if (order[i] == best) continue;
          verts[order[i]] = verts[best] + opts.shrink * (verts[order[i]] - verts[best]);
          fv[order[i]] = eval(verts[order[i]]);
        }
      }
    }
  }

  sort_simplex();
  res.x = verts[order.front()];
  res.value = fv[order.front()];
  return res;
}

/// Restarted variant for high-accuracy use: reruns with a fresh, shrinking
/// simplex around the incumbent until the restart no longer improves.
inline NelderMeadResult nelder_mead_restarted(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
    NelderMeadOptions opts, int restarts) {
  NelderMeadResult best = nelder_mead(f, x0, opts);
  for (int r = 0; r < restarts; ++r) {
    opts.initial_step *= 0.25;
    NelderMeadResult next = nelder_mead(f, best.x, opts);
    next.evaluations += best.evaluations;
    next.iterations += best.iterations;
    if (next.value <= best.value) best = next;
  }
  return best;
}

}  // namespace fmix
