#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fmix {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Absolute tolerance (in time units) when matching observation times to
/// design time points.
inline constexpr double kTimeSnapTol = 1e-9;

/// The distinct design time points tau_1 < ... < tau_M of a study, plus the
/// spacings h_r = tau_{r+1} - tau_r. All curve estimates live on these knots.
template <typename Scalar>
class TimeGridT {
 public:
  /// Empty grid; any structural use throws until real points are assigned.
  TimeGridT() = default;

  explicit TimeGridT(VectorX<Scalar> points) : points_(std::move(points)) {
    if (points_.size() < 3)
      throw std::invalid_argument("TimeGrid: at least 3 design time points required");
    spacings_.resize(points_.size() - 1);
    for (Index r = 0; r + 1 < points_.size(); ++r) {
      spacings_[r] = points_[r + 1] - points_[r];
      if (!(spacings_[r] > Scalar(0)))
        throw std::invalid_argument("TimeGrid: time points must be strictly increasing");
    }
  }

  TimeGridT(std::initializer_list<Scalar> points)
      : TimeGridT(Eigen::Map<const VectorX<Scalar>>(points.begin(),
                                                    static_cast<Index>(points.size()))
                      .eval()) {}

  /// Builds a grid from raw observation times: sorts, then merges values that
  /// agree to within `tol` into a single design point.
  static TimeGridT from_times(std::vector<Scalar> times, Scalar tol = Scalar(kTimeSnapTol)) {
    if (times.empty()) throw std::invalid_argument("TimeGrid: no observation times");
    std::sort(times.begin(), times.end());
    std::vector<Scalar> distinct;
    distinct.push_back(times.front());
    for (Scalar t : times) {
      if (t - distinct.back() > tol) distinct.push_back(t);
    }
    VectorX<Scalar> pts =
        Eigen::Map<const VectorX<Scalar>>(distinct.data(), static_cast<Index>(distinct.size()));
    return TimeGridT(std::move(pts));
  }

  Index size() const { return points_.size(); }
  const VectorX<Scalar>& points() const { return points_; }
  const VectorX<Scalar>& spacings() const { return spacings_; }
  Scalar front() const { return points_[0]; }
  Scalar back() const { return points_[points_.size() - 1]; }
  /// Length of the data support [tau_1, tau_M].
  Scalar span() const { return back() - front(); }

  /// Index m with |t - tau_m| <= tol; throws if no design point matches.
  Index locate(Scalar t, Scalar tol = Scalar(kTimeSnapTol)) const {
    const Scalar* begin = points_.data();
    const Scalar* end = begin + points_.size();
    const Scalar* it = std::lower_bound(begin, end, t);
    Index best = -1;
    Scalar best_dist = std::numeric_limits<Scalar>::infinity();
    for (const Scalar* c : {it, it == begin ? it : it - 1}) {
      if (c == end) continue;
      Scalar d = std::abs(*c - t);
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<Index>(c - begin);
      }
    }
    if (best < 0 || best_dist > tol)
      throw std::invalid_argument("TimeGrid: observation time does not match any design point");
    return best;
  }

  /// Interval index r such that t lies in [tau_r, tau_{r+1}], clamped to the
  /// boundary intervals for t outside the grid.
  Index interval(Scalar t) const {
    const Scalar* begin = points_.data();
    const Scalar* end = begin + points_.size();
    Index r = static_cast<Index>(std::upper_bound(begin, end, t) - begin) - 1;
    return std::clamp<Index>(r, 0, points_.size() - 2);
  }

  bool operator==(const TimeGridT& other) const { return points_ == other.points_; }

 private:
  VectorX<Scalar> points_;
  VectorX<Scalar> spacings_;
};

using TimeGrid = TimeGridT<double>;

/// Solves B x = rhs for symmetric positive-definite tridiagonal B given by its
/// diagonal and first off-diagonal, using an LDL^T sweep. No fill-in, O(n)
/// per right-hand side.
template <typename Scalar>
MatrixX<Scalar> solve_sym_tridiagonal(const VectorX<Scalar>& diag, const VectorX<Scalar>& off,
                                      MatrixX<Scalar> rhs) {
  const Index n = diag.size();
  if (off.size() != std::max<Index>(n - 1, 0) || rhs.rows() != n)
    throw std::invalid_argument("solve_sym_tridiagonal: dimension mismatch");
  if (n == 0) return rhs;
  VectorX<Scalar> d(n), l(n - 1);
  d[0] = diag[0];
  for (Index i = 1; i < n; ++i) {
    if (!(d[i - 1] > Scalar(0)))
      throw std::runtime_error("solve_sym_tridiagonal: matrix is not positive definite");
    l[i - 1] = off[i - 1] / d[i - 1];
    d[i] = diag[i] - l[i - 1] * off[i - 1];
  }
  if (!(d[n - 1] > Scalar(0)))
    throw std::runtime_error("solve_sym_tridiagonal: matrix is not positive definite");
  // forward: L z = rhs
  for (Index i = 1; i < n; ++i) rhs.row(i) -= l[i - 1] * rhs.row(i - 1);
  // diagonal
  for (Index i = 0; i < n; ++i) rhs.row(i) /= d[i];
  // backward: L^T x = z
  for (Index i = n - 2; i >= 0; --i) rhs.row(i) -= l[i] * rhs.row(i + 1);
  return rhs;
}

/// Roughness structure of the natural cubic smoothing spline on a grid:
/// G = A B^{-1} A^T with f' G f = integral of the squared second derivative
/// of the natural cubic interpolant of f. G is PSD with rank M-2 and its
/// null space is spanned by the constant and linear vectors.
template <typename Scalar>
struct RoughnessT {
  MatrixX<Scalar> G;  // M x M
  MatrixX<Scalar> A;  // M x (M-2), banded
  MatrixX<Scalar> B;  // (M-2) x (M-2), symmetric tridiagonal
};

using Roughness = RoughnessT<double>;

template <typename Scalar>
RoughnessT<Scalar> build_roughness(const TimeGridT<Scalar>& grid) {
  const Index m = grid.size();
  if (m < 3) throw std::invalid_argument("build_roughness: at least 3 design time points required");
  const VectorX<Scalar>& h = grid.spacings();
  RoughnessT<Scalar> out;
  out.A = MatrixX<Scalar>::Zero(m, m - 2);
  for (Index r = 0; r < m - 2; ++r) {
    out.A(r, r) = Scalar(1) / h[r];
    out.A(r + 1, r) = -(Scalar(1) / h[r] + Scalar(1) / h[r + 1]);
    out.A(r + 2, r) = Scalar(1) / h[r + 1];
  }
  VectorX<Scalar> bdiag(m - 2), boff(m > 3 ? m - 3 : 0);
  for (Index r = 0; r < m - 2; ++r) bdiag[r] = (h[r] + h[r + 1]) / Scalar(3);
  for (Index r = 0; r + 1 < m - 2; ++r) boff[r] = h[r + 1] / Scalar(6);
  out.B = MatrixX<Scalar>::Zero(m - 2, m - 2);
  out.B.diagonal() = bdiag;
  if (m > 3) {
    out.B.template diagonal<1>() = boff;
    out.B.template diagonal<-1>() = boff;
  }
  MatrixX<Scalar> binv_at = solve_sym_tridiagonal<Scalar>(bdiag, boff, out.A.transpose());
  out.G.noalias() = out.A * binv_at;
  out.G = ((out.G + out.G.transpose()) / Scalar(2)).eval();  // exact symmetry
  return out;
}

/// 0/1 matrix mapping an individual's observations to design time points:
/// row j has a single 1 in the column of the matching design point. Stored
/// as the per-row column index.
class IncidenceMatrix {
 public:
  IncidenceMatrix(Eigen::VectorXi cols, Index num_design_points)
      : cols_(std::move(cols)), num_design_points_(num_design_points) {}

  Index rows() const { return cols_.size(); }
  Index cols() const { return num_design_points_; }
  /// Design-point index of observation j.
  int col_of(Index j) const { return cols_[j]; }
  const Eigen::VectorXi& col_indices() const { return cols_; }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows(), cols());
    for (Index j = 0; j < rows(); ++j) x(j, cols_[j]) = 1.0;
    return x;
  }

  /// X * v: gathers design-point values onto observations.
  template <typename Derived>
  VectorX<typename Derived::Scalar> gather(const Eigen::MatrixBase<Derived>& v) const {
    VectorX<typename Derived::Scalar> out(rows());
    for (Index j = 0; j < rows(); ++j) out[j] = v[cols_[j]];
    return out;
  }

  /// X^T * r: scatter-adds observation values back onto design points.
  template <typename Derived>
  VectorX<typename Derived::Scalar> scatter(const Eigen::MatrixBase<Derived>& r) const {
    VectorX<typename Derived::Scalar> out =
        VectorX<typename Derived::Scalar>::Zero(num_design_points_);
    for (Index j = 0; j < rows(); ++j) out[cols_[j]] += r[j];
    return out;
  }

 private:
  Eigen::VectorXi cols_;
  Index num_design_points_;
};

template <typename Scalar>
IncidenceMatrix build_incidence(const TimeGridT<Scalar>& grid, const std::vector<Scalar>& obs_times,
                                Scalar tol = Scalar(kTimeSnapTol)) {
  Eigen::VectorXi cols(static_cast<Index>(obs_times.size()));
  for (Index j = 0; j < cols.size(); ++j)
    cols[j] = static_cast<int>(grid.locate(obs_times[static_cast<size_t>(j)], tol));
  return IncidenceMatrix(std::move(cols), grid.size());
}

/// Natural cubic spline interpolating (tau_m, f_m) with zero second
/// derivative at both boundary knots. The interior second derivatives solve
/// B m = A^T f, the same B and A as the roughness construction, and the
/// curve extends linearly outside [tau_1, tau_M].
template <typename Scalar>
class NaturalCubicSplineT {
 public:
  template <typename Derived>
  NaturalCubicSplineT(TimeGridT<Scalar> grid, const Eigen::MatrixBase<Derived>& values)
      : grid_(std::move(grid)), values_(values) {
    const Index m = grid_.size();
    if (m < 3) throw std::invalid_argument("NaturalCubicSpline: at least 3 knots required");
    if (values_.size() != m)
      throw std::invalid_argument("NaturalCubicSpline: values/grid size mismatch");
    const VectorX<Scalar>& h = grid_.spacings();
    VectorX<Scalar> bdiag(m - 2), boff(m > 3 ? m - 3 : 0), rhs(m - 2);
    for (Index r = 0; r < m - 2; ++r) {
      bdiag[r] = (h[r] + h[r + 1]) / Scalar(3);
      rhs[r] = (values_[r + 2] - values_[r + 1]) / h[r + 1] - (values_[r + 1] - values_[r]) / h[r];
    }
    for (Index r = 0; r + 1 < m - 2; ++r) boff[r] = h[r + 1] / Scalar(6);
    MatrixX<Scalar> sol = solve_sym_tridiagonal<Scalar>(bdiag, boff, rhs);
    second_derivs_ = VectorX<Scalar>::Zero(m);
    second_derivs_.segment(1, m - 2) = sol.col(0);
  }

  const TimeGridT<Scalar>& grid() const { return grid_; }
  const VectorX<Scalar>& values() const { return values_; }
  /// Second derivatives at the knots (zero at both ends).
  const VectorX<Scalar>& knot_second_derivatives() const { return second_derivs_; }

  Scalar operator()(Scalar t) const { return value(t); }

  Scalar value(Scalar t) const {
    if (t < grid_.front()) return values_[0] + derivative(grid_.front()) * (t - grid_.front());
    if (t > grid_.back())
      return values_[grid_.size() - 1] + derivative(grid_.back()) * (t - grid_.back());
    const Index r = grid_.interval(t);
    const Scalar h = grid_.spacings()[r];
    const Scalar a = grid_.points()[r + 1] - t, b = t - grid_.points()[r];
    return (second_derivs_[r] * a * a * a + second_derivs_[r + 1] * b * b * b) / (6 * h) +
           (values_[r] / h - second_derivs_[r] * h / 6) * a +
           (values_[r + 1] / h - second_derivs_[r + 1] * h / 6) * b;
  }

  Scalar derivative(Scalar t) const {
    t = std::clamp(t, grid_.front(), grid_.back());  // linear extension outside
    const Index r = grid_.interval(t);
    const Scalar h = grid_.spacings()[r];
    const Scalar a = grid_.points()[r + 1] - t, b = t - grid_.points()[r];
    return (-second_derivs_[r] * a * a + second_derivs_[r + 1] * b * b) / (2 * h) -
           (values_[r] / h - second_derivs_[r] * h / 6) +
           (values_[r + 1] / h - second_derivs_[r + 1] * h / 6);
  }

  Scalar second_derivative(Scalar t) const {
    if (t < grid_.front() || t > grid_.back()) return Scalar(0);
    const Index r = grid_.interval(t);
    const Scalar h = grid_.spacings()[r];
    return (second_derivs_[r] * (grid_.points()[r + 1] - t) +
            second_derivs_[r + 1] * (t - grid_.points()[r])) /
           h;
  }

 private:
  TimeGridT<Scalar> grid_;
  VectorX<Scalar> values_;
  VectorX<Scalar> second_derivs_;
};

using NaturalCubicSpline = NaturalCubicSplineT<double>;

namespace detail {
// 4-point Gauss-Legendre rule on [-1, 1]; exact through degree 7, enough for
// the square of a cubic.
template <typename Scalar>
struct GaussLegendre4 {
  static constexpr double nodes[4] = {-0.8611363115940526, -0.3399810435848563,
                                      0.3399810435848563, 0.8611363115940526};
  static constexpr double weights[4] = {0.34785484513745385, 0.6521451548625461,
                                        0.6521451548625461, 0.34785484513745385};
};
}  // namespace detail

/// Exact integral of g(t)^2 over [tau_1, tau_M] where g is the spline or one
/// of its first two derivatives (piecewise polynomial, so fixed-order
/// Gauss-Legendre is exact per interval).
template <typename Scalar>
Scalar integrate_squared(const NaturalCubicSplineT<Scalar>& s, int derivative_order) {
  if (derivative_order < 0 || derivative_order > 2)
    throw std::invalid_argument("integrate_squared: derivative order must be 0, 1 or 2");
  using GL = detail::GaussLegendre4<Scalar>;
  const auto& pts = s.grid().points();
  Scalar total = 0;
  for (Index r = 0; r + 1 < pts.size(); ++r) {
    const Scalar mid = (pts[r] + pts[r + 1]) / 2, half = (pts[r + 1] - pts[r]) / 2;
    Scalar acc = 0;
    for (int q = 0; q < 4; ++q) {
      const Scalar t = mid + half * Scalar(GL::nodes[q]);
      const Scalar g = derivative_order == 0   ? s.value(t)
                       : derivative_order == 1 ? s.derivative(t)
                                               : s.second_derivative(t);
      acc += Scalar(GL::weights[q]) * g * g;
    }
    total += half * acc;
  }
  return total;
}

/// Integral of the squared second derivative of the spline; equals
/// f^T G f for the roughness matrix of the same grid.
template <typename Scalar>
Scalar roughness_functional(const NaturalCubicSplineT<Scalar>& s) {
  return integrate_squared(s, 2);
}

/// L2 norm sqrt(integral of s^(k)(t)^2 dt) over the data support, k in {0, 1}.
template <typename Scalar>
Scalar l2_norm(const NaturalCubicSplineT<Scalar>& s, int derivative_order = 0) {
  if (derivative_order != 0 && derivative_order != 1)
    throw std::invalid_argument("l2_norm: derivative order must be 0 or 1");
  return std::sqrt(integrate_squared(s, derivative_order));
}

}  // namespace fmix
