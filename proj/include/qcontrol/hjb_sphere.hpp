// Copyright 2026 The qcontrol Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Stationary dynamic-programming solvers on the Bloch sphere in polar
// coordinates x = sin(t) cos(p), y = sin(t) sin(p), z = cos(t):
//
//  * time-optimal control of the closed atom with |u| <= 1,
//      min_u { -u (S_t sin p + S_p cot t cos p) + w S_p + 1 } = 0,
//  * impulsive control (QVI) with drift-only flow and x-axis rotations,
//      min{ w S_p + 1, min_v S(rot_v r) - S(r) } = 0.
//
// Both are solved by monotone value iteration from S = 0 with first-order
// upwind differences; target cells are clamped to zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"
#include "qcontrol/hybrid.hpp"

namespace qcontrol {

/// Cell-centred polar grid: theta_i = (i + 1/2) dtheta avoids the poles,
/// phi_j = j dphi is periodic.
class PolarGrid {
 public:
  PolarGrid(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 2) throw InvalidArgument("polar grid needs n_theta >= 2");
    if (n_phi < 4 || n_phi % 2 != 0) throw InvalidArgument("polar grid needs even n_phi >= 4");
    dtheta_ = std::numbers::pi / n_theta;
    dphi_ = 2.0 * std::numbers::pi / n_phi;
  }

  int n_theta() const { return n_theta_; }
  int n_phi() const { return n_phi_; }
  std::size_t size() const { return static_cast<std::size_t>(n_theta_) * n_phi_; }
  double dtheta() const { return dtheta_; }
  double dphi() const { return dphi_; }
  double theta_min() const { return 0.5 * dtheta_; }

  double theta(int i) const { return (i + 0.5) * dtheta_; }
  double phi(int j) const { return j * dphi_; }

  int wrap(int j) const { return ((j % n_phi_) + n_phi_) % n_phi_; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * n_phi_ + static_cast<std::size_t>(wrap(j));
  }

  BlochVector point(int i, int j) const {
    const double t = theta(i);
    const double p = phi(j);
    return {std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
  }

  /// Nearest node to (theta, phi).
  std::pair<int, int> snap(double theta, double phi) const {
    const int i = std::clamp(static_cast<int>(std::lround(theta / dtheta_ - 0.5)), 0, n_theta_ - 1);
    const int j = wrap(static_cast<int>(std::lround(phi / dphi_)));
    return {i, j};
  }

  /// Neighbour one step in theta; stepping past a pole lands on the same
  /// row on the opposite meridian.
  std::size_t theta_neighbour(int i, int j, int step) const {
    const int k = i + step;
    if (k < 0 || k >= n_theta_) return index(i, j + n_phi_ / 2);
    return index(k, j);
  }

  /// Bilinear interpolation of node data at a point on (or near) the
  /// sphere; theta is clamped to the node range, phi wraps.
  double interpolate(const std::vector<double>& f, const BlochVector& r) const {
    const double len = r.norm();
    if (len == 0.0) throw InvalidArgument("cannot locate the origin on the sphere");
    const double t = std::acos(std::clamp(r.z / len, -1.0, 1.0));
    double p = std::atan2(r.y, r.x);
    if (p < 0.0) p += 2.0 * std::numbers::pi;
    return interpolate(f, t, p);
  }

  double interpolate(const std::vector<double>& f, double theta, double phi) const {
    const double s = std::clamp(theta / dtheta_ - 0.5, 0.0, static_cast<double>(n_theta_ - 1));
    int i0 = std::min(static_cast<int>(s), n_theta_ - 2);
    const double a = s - i0;
    const double q = phi / dphi_;
    const double qf = std::floor(q);
    const int j0 = wrap(static_cast<int>(qf));
    const double b = q - qf;
    return (1 - a) * ((1 - b) * f[index(i0, j0)] + b * f[index(i0, j0 + 1)]) +
           a * ((1 - b) * f[index(i0 + 1, j0)] + b * f[index(i0 + 1, j0 + 1)]);
  }

 private:
  int n_theta_;
  int n_phi_;
  double dtheta_;
  double dphi_;
};

template <class Grid>
struct ValueFunction {
  Grid grid;
  std::vector<double> values;
  bool converged = false;
  double residual = 0.0;
  long iterations = 0;
};

template <class Grid, class Action = double>
struct FeedbackLaw {
  Grid grid;
  std::vector<Action> control;
};

struct StationaryOptions {
  double tol = 1e-6;
  long max_sweeps = 500000;
};

/// Target node plus its one-cell neighbourhood.
inline std::vector<unsigned char> target_cells(const PolarGrid& g, double theta_f, double phi_f) {
  const auto [it, jt] = g.snap(theta_f, phi_f);
  std::vector<unsigned char> mask(g.size(), 0);
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) {
      const int i = it + di;
      if (i < 0 || i >= g.n_theta()) continue;
      mask[g.index(i, jt + dj)] = 1;
    }
  return mask;
}

// ---------------------------------------------------------------------------
// Time-optimal control

struct TimeOptimalSolution {
  ValueFunction<PolarGrid> value;
  std::vector<unsigned char> target;
  std::pair<int, int> target_node;
  double omega = 0.0;
  /// Smallest per-node change seen over all sweeps; >= 0 for a monotone run.
  double min_increment = 0.0;
};

namespace detail {

inline constexpr double kControls[3] = {-1.0, 0.0, 1.0};

/// Upwind discrete Hamiltonian pieces for control u at node (i, j):
/// weight sum W, neighbour sum N and the differenced form
/// D = sum w (S_nb - S_ij), so that H = 1 + D = 1 + N - W S_ij.
struct UpwindTerms {
  double weight = 0.0;
  double neighbours = 0.0;
  double differences = 0.0;
};

inline UpwindTerms time_optimal_terms(const PolarGrid& g, const std::vector<double>& s,
                                      double omega, int i, int j, double u) {
  const double t = g.theta(i);
  const double p = g.phi(j);
  const double a_t = -u * std::sin(p);
  const double a_p = omega - u * std::cos(t) / std::sin(t) * std::cos(p);
  const double centre = s[g.index(i, j)];
  UpwindTerms out;
  if (a_t != 0.0) {
    const double w = std::abs(a_t) / g.dtheta();
    const double nb = s[g.theta_neighbour(i, j, a_t > 0.0 ? 1 : -1)];
    out.weight += w;
    out.neighbours += w * nb;
    out.differences += w * (nb - centre);
  }
  if (a_p != 0.0) {
    const double w = std::abs(a_p) / g.dphi();
    const double nb = s[g.index(i, j + (a_p > 0.0 ? 1 : -1))];
    out.weight += w;
    out.neighbours += w * nb;
    out.differences += w * (nb - centre);
  }
  return out;
}

}  // namespace detail

/// Discrete Hamiltonian 1 + sum_d |a_d| / h_d (S_upwind - S) for control u.
inline double time_optimal_hamiltonian(const PolarGrid& g, const std::vector<double>& s,
                                       double omega, int i, int j, double u) {
  const auto terms = detail::time_optimal_terms(g, s, omega, i, j, u);
  if (terms.weight == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 + terms.differences;
}

/// Solves with an explicit target set (nonzero entries of `target`).
inline TimeOptimalSolution solve_time_optimal(const PolarGrid& grid, double omega,
                                              std::vector<unsigned char> target,
                                              std::pair<int, int> target_node,
                                              const StationaryOptions& opts = {}) {
  if (!std::isfinite(omega)) throw InvalidArgument("omega must be finite");
  if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be > 0");
  if (target.size() != grid.size()) throw InvalidArgument("target mask does not match the grid");
  if (std::none_of(target.begin(), target.end(), [](unsigned char c) { return c != 0; }))
    throw InvalidArgument("target set is empty");
  TimeOptimalSolution sol{{grid, std::vector<double>(grid.size(), 0.0)},
                          std::move(target),
                          target_node,
                          omega,
                          std::numeric_limits<double>::infinity()};
  auto& s = sol.value.values;
  std::vector<double> next(s.size(), 0.0);

  for (long sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double residual = 0.0;
    for (int i = 0; i < grid.n_theta(); ++i)
      for (int j = 0; j < grid.n_phi(); ++j) {
        const std::size_t k = grid.index(i, j);
        if (sol.target[k]) {
          next[k] = 0.0;
          continue;
        }
        double best = std::numeric_limits<double>::infinity();
        double h_min = std::numeric_limits<double>::infinity();
        for (double u : detail::kControls) {
          const auto terms = detail::time_optimal_terms(grid, s, omega, i, j, u);
          if (terms.weight == 0.0) continue;
          best = std::min(best, (1.0 + terms.neighbours) / terms.weight);
          h_min = std::min(h_min, 1.0 + terms.differences);
        }
        residual = std::max(residual, std::abs(h_min));
        next[k] = best;
      }
    sol.value.residual = residual;
    sol.value.iterations = sweep;
    if (residual < opts.tol) {
      sol.value.converged = true;
      if (sweep == 0) sol.min_increment = 0.0;
      return sol;
    }
    for (std::size_t k = 0; k < s.size(); ++k)
      sol.min_increment = std::min(sol.min_increment, next[k] - s[k]);
    s.swap(next);
  }
  throw ConvergenceError("time-optimal value iteration did not converge", sol.value.residual,
                         opts.max_sweeps);
}

/// Target (theta_f, phi_f) snapped to the nearest node, plus its
/// one-cell neighbourhood.
inline TimeOptimalSolution solve_time_optimal(const PolarGrid& grid, double omega,
                                              double theta_f, double phi_f,
                                              const StationaryOptions& opts = {}) {
  return solve_time_optimal(grid, omega, target_cells(grid, theta_f, phi_f),
                            grid.snap(theta_f, phi_f), opts);
}

struct BangBangLaw {
  FeedbackLaw<PolarGrid, double> law;
  /// Discrete switching function (H(-1) - H(+1)) / 2 per node.
  std::vector<double> switching;
};

/// u = sign(switching) with sign(0) = +1; target cells get +1.
inline BangBangLaw extract_bang_bang(const TimeOptimalSolution& sol) {
  const auto& g = sol.value.grid;
  const auto& s = sol.value.values;
  BangBangLaw out{{g, std::vector<double>(g.size(), 1.0)}, std::vector<double>(g.size(), 0.0)};
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      if (sol.target[k]) continue;
      const double sigma = 0.5 * (time_optimal_hamiltonian(g, s, sol.omega, i, j, -1.0) -
                                  time_optimal_hamiltonian(g, s, sol.omega, i, j, 1.0));
      out.switching[k] = sigma;
      out.law.control[k] = sigma >= 0.0 ? 1.0 : -1.0;
    }
  return out;
}

struct RolloutResult {
  bool reached = false;
  double time = 0.0;
  BlochVector final_state;
};

/// Closed-loop integration of the closed atom under the bang-bang law,
/// u = sign of the interpolated switching function, until the angular
/// distance to `target` drops to `radius` or `max_time` elapses.
inline RolloutResult rollout_bang_bang(const BangBangLaw& law, double omega, const BlochVector& start,
                                       const BlochVector& target, double radius, double max_time,
                                       double dt = 1e-3) {
  const auto& g = law.law.grid;
  BlochVector r = start;
  double t = 0.0;
  auto angle = [&](const BlochVector& a) {
    return std::acos(std::clamp(a.dot(target) / (a.norm() * target.norm()), -1.0, 1.0));
  };
  while (t < max_time) {
    if (angle(r) <= radius) return {true, t, r};
    const double u = g.interpolate(law.switching, r) >= 0.0 ? 1.0 : -1.0;
    const auto rhs = [&](double, const BlochVector& q) { return closed_bloch_rhs(q, u, omega); };
    r = rk4_step(rhs, t, r, dt);
    t += dt;
  }
  return {angle(r) <= radius, t, r};
}

// ---------------------------------------------------------------------------
// Impulsive control (QVI)

struct QviSolution {
  ValueFunction<PolarGrid> value;
  std::vector<unsigned char> target;
  std::pair<int, int> target_node;
  double omega = 0.0;
  std::vector<double> angles;
  /// -1 = drift, otherwise index into `angles`.
  FeedbackLaw<PolarGrid, int> action;
  /// Smallest per-node change over all sweeps; >= 0 for a monotone run.
  double min_increment = 0.0;
};

struct QviOptions {
  double tol = 1e-9;  ///< Max update between sweeps.
  long max_sweeps = 500000;
  int impulse_angles = 64;
};

namespace detail {

/// Bilinear stencil of a point on the grid: four nodes and weights.
struct Stencil {
  std::size_t node[4];
  double weight[4];

  double apply(const std::vector<double>& f) const {
    return weight[0] * f[node[0]] + weight[1] * f[node[1]] + weight[2] * f[node[2]] +
           weight[3] * f[node[3]];
  }
};

inline Stencil bilinear_stencil(const PolarGrid& g, const BlochVector& r) {
  const double t = std::acos(std::clamp(r.z / r.norm(), -1.0, 1.0));
  double p = std::atan2(r.y, r.x);
  if (p < 0.0) p += 2.0 * std::numbers::pi;
  const double s = std::clamp(t / g.dtheta() - 0.5, 0.0, static_cast<double>(g.n_theta() - 1));
  const int i0 = std::min(static_cast<int>(s), g.n_theta() - 2);
  const double a = s - i0;
  const double q = p / g.dphi();
  const double qf = std::floor(q);
  const int j0 = g.wrap(static_cast<int>(qf));
  const double b = q - qf;
  return {{g.index(i0, j0), g.index(i0, j0 + 1), g.index(i0 + 1, j0), g.index(i0 + 1, j0 + 1)},
          {(1 - a) * (1 - b), (1 - a) * b, a * (1 - b), a * b}};
}

inline double qvi_drift_value(const PolarGrid& g, const std::vector<double>& s, double omega,
                              int i, int j) {
  return g.dphi() / std::abs(omega) + s[g.index(i, j + (omega > 0.0 ? 1 : -1))];
}

}  // namespace detail

/// Nonzero impulse angles 2 pi k / m, k = 1..m-1. The identity is left out
/// because it would make the impulse branch trivially equal to S.
inline std::vector<double> impulse_angles(int m) {
  if (m < 2) throw InvalidArgument("impulse set needs at least 2 angles");
  std::vector<double> v;
  for (int k = 1; k < m; ++k) v.push_back(2.0 * std::numbers::pi * k / m);
  return v;
}

struct QviResiduals {
  double min_drift = 0.0;    ///< min over nodes of |w| (S_next - S) / dphi + 1.
  double min_impulse = 0.0;  ///< min over nodes and v of S(rot_v r) - S(r).
  double max_complementarity = 0.0;  ///< max over nodes of min(drift, impulse).
  /// Impulse branch with S(rot_v r) taken by plain bilinear interpolation of
  /// node values instead of the scheme's own off-grid value; informational.
  double min_impulse_interpolated = 0.0;
  double max_abs = 0.0;  ///< max |min(drift, impulse)|.
  double mean_abs = 0.0;
  std::size_t nodes = 0;
};

namespace detail {

inline std::vector<std::vector<Stencil>> impulse_stencils(const PolarGrid& g,
                                                         const std::vector<double>& angles) {
  std::vector<std::vector<Stencil>> st(g.size());
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      auto& row = st[g.index(i, j)];
      row.reserve(angles.size());
      const BlochVector r = g.point(i, j);
      for (double v : angles) row.push_back(bilinear_stencil(g, apply_impulse(r, v)));
    }
  return st;
}

/// E = dphi / |w| + S(drift neighbour), zero on the target.
inline std::vector<double> qvi_drift_field(const PolarGrid& g, const std::vector<double>& s,
                                           const std::vector<unsigned char>& target, double omega) {
  std::vector<double> e(s.size(), 0.0);
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      e[k] = target[k] ? 0.0 : qvi_drift_value(g, s, omega, i, j);
    }
  return e;
}

}  // namespace detail

/// Value of the discrete QVI at an arbitrary point q of the sphere: the
/// scheme's update min over v in {0} u V of E(rot_v q), with E the drift
/// field interpolated bilinearly. At nodes this reproduces S.
inline double qvi_value_at(const QviSolution& sol, const std::vector<double>& drift_field,
                           const BlochVector& q) {
  const auto& g = sol.value.grid;
  double best = g.interpolate(drift_field, q);
  for (double v : sol.angles) best = std::min(best, g.interpolate(drift_field, apply_impulse(q, v)));
  return best;
}

/// Branch residuals of the QVI on non-target nodes:
///   drift    |w| (S_next - S) / dphi + 1 >= 0
///   impulse  S(rot_v r) - S(r) >= 0 for every v
/// and the complementarity min(drift, impulse) = 0.
inline QviResiduals qvi_residuals(const QviSolution& sol) {
  const auto& g = sol.value.grid;
  const auto& s = sol.value.values;
  const auto st = detail::impulse_stencils(g, sol.angles);
  const auto e = detail::qvi_drift_field(g, s, sol.target, sol.omega);
  QviResiduals r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      if (sol.target[k]) continue;
      const double drift = std::abs(sol.omega) * (e[k] - s[k]) / g.dphi();
      const BlochVector p = g.point(i, j);
      double imp = std::numeric_limits<double>::infinity();
      double imp_interp = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sol.angles.size(); ++a) {
        imp = std::min(imp, qvi_value_at(sol, e, apply_impulse(p, sol.angles[a])) - s[k]);
        imp_interp = std::min(imp_interp, st[k][a].apply(s) - s[k]);
      }
      r.min_drift = std::min(r.min_drift, drift);
      r.min_impulse = std::min(r.min_impulse, imp);
      r.max_complementarity = std::max(r.max_complementarity, std::min(drift, imp));
      r.min_impulse_interpolated = std::min(r.min_impulse_interpolated, imp_interp);
      const double c = std::abs(std::min(drift, imp));
      r.max_abs = std::max(r.max_abs, c);
      r.mean_abs += c;
      ++r.nodes;
    }
  if (r.nodes) r.mean_abs /= static_cast<double>(r.nodes);
  return r;
}

/// Value iteration for the QVI. Two consecutive impulses compose into one
/// rotation, so every impulse is followed by a drift step: with
///   E(r) = dphi / |w| + S(drift neighbour of r)   (E = 0 on the target),
/// the update is S(r) = min(E(r), min_v E(rot_v r)). A bare update
/// S = min(E, min_v S o rot_v) would admit S = 0 as a fixed point, since
/// interpolated zero-time impulse chains leak into the target.
inline QviSolution solve_qvi(const PolarGrid& grid, double omega, double theta_f, double phi_f,
                             const QviOptions& opts = {}) {
  if (!std::isfinite(omega) || omega == 0.0)
    throw InvalidArgument("QVI drift needs a finite nonzero omega");
  if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be > 0");
  QviSolution sol{{grid, std::vector<double>(grid.size(), 0.0)},
                  target_cells(grid, theta_f, phi_f),
                  grid.snap(theta_f, phi_f),
                  omega,
                  impulse_angles(opts.impulse_angles),
                  {grid, std::vector<int>(grid.size(), -1)},
                  std::numeric_limits<double>::infinity()};

  const auto st = detail::impulse_stencils(grid, sol.angles);
  auto& s = sol.value.values;
  std::vector<double> drift;
  auto fill_drift = [&] { drift = detail::qvi_drift_field(grid, s, sol.target, omega); };
  for (long sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    fill_drift();
    double change = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (sol.target[k]) continue;
      double best = drift[k];
      for (const auto& stencil : st[k]) best = std::min(best, stencil.apply(drift));
      change = std::max(change, std::abs(best - s[k]));
      sol.min_increment = std::min(sol.min_increment, best - s[k]);
      s[k] = best;  // safe: this sweep reads only `drift`
    }
    sol.value.iterations = sweep;
    sol.value.residual = change;
    if (change < opts.tol) {
      sol.value.converged = true;
      break;
    }
  }
  if (!sol.value.converged)
    throw ConvergenceError("QVI value iteration did not converge", sol.value.residual,
                           opts.max_sweeps);

  fill_drift();
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (sol.target[k]) continue;
    double best = drift[k];
    for (std::size_t a = 0; a < st[k].size(); ++a) {
      const double v = st[k][a].apply(drift);
      if (v < best) {
        best = v;
        sol.action.control[k] = static_cast<int>(a);
      }
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Residual evaluation

struct ResidualReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  std::size_t nodes = 0;
};

/// Discrete time-optimal residual min_u H(u) over non-target nodes.
inline ResidualReport dpe_residual(const TimeOptimalSolution& sol) {
  const auto& g = sol.value.grid;
  ResidualReport rep;
  double total = 0.0;
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      if (sol.target[g.index(i, j)]) continue;
      double h = std::numeric_limits<double>::infinity();
      for (double u : detail::kControls)
        h = std::min(h, time_optimal_hamiltonian(g, sol.value.values, sol.omega, i, j, u));
      rep.max_abs = std::max(rep.max_abs, std::abs(h));
      total += std::abs(h);
      ++rep.nodes;
    }
  rep.mean_abs = rep.nodes ? total / static_cast<double>(rep.nodes) : 0.0;
  return rep;
}

/// QVI residual |min(drift branch, impulse branch)| over non-target nodes.
inline ResidualReport dpe_residual(const QviSolution& sol) {
  const QviResiduals r = qvi_residuals(sol);
  return {r.max_abs, r.mean_abs, r.nodes};
}

/// Cross-check in Cartesian form, min_u { DS(r)[f(r, u)] + 1 }, with the
/// directional derivative taken as a forward difference of the interpolated
/// value along one RK4 step of length `eps` of the closed dynamics. This is
/// a consistency probe for the polar solver, not an alternative solver; its
/// size is O(grid spacing) away from the target and switching curves.
inline ResidualReport dpe_residual_rectangular(const TimeOptimalSolution& sol, double eps) {
  const auto& g = sol.value.grid;
  const auto& s = sol.value.values;
  ResidualReport rep;
  double total = 0.0;
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      if (sol.target[k]) continue;
      const BlochVector r = g.point(i, j);
      double h = std::numeric_limits<double>::infinity();
      for (double u : detail::kControls) {
        const auto rhs = [&](double, const BlochVector& q) {
          return closed_bloch_rhs(q, u, sol.omega);
        };
        const BlochVector r2 = rk4_step(rhs, 0.0, r, eps);
        h = std::min(h, (g.interpolate(s, r2) - s[k]) / eps + 1.0);
      }
      rep.max_abs = std::max(rep.max_abs, std::abs(h));
      total += std::abs(h);
      ++rep.nodes;
    }
  rep.mean_abs = rep.nodes ? total / static_cast<double>(rep.nodes) : 0.0;
  return rep;
}

}  // namespace qcontrol
