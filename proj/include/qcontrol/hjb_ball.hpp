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

// Finite-horizon dynamic programming on a cubic lattice clipped to a ball.
//
// A Problem supplies, for a node r and a control u,
//   terminal(r)                         S(r, T)
//   control(r, value, gradient)         inner minimizer (nullopt = guarded)
//   coefficients(r, u)                  drift b, diffusion vector g,
//                                       reaction c and source l
// and the solver marches
//   S_t + 1/2 g^T D^2 S g + b . DS + c S + l = 0
// backward with explicit steps: upwind advection, central diffusion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"
#include "qcontrol/hybrid.hpp"

namespace qcontrol {

/// Uniform lattice on [-R, R]^3 with spacing h; nodes with |r| <= R are
/// active.
class BallGrid {
 public:
  explicit BallGrid(double h, double radius = 1.0) : h_(h), radius_(radius) {
    if (!(h > 0.0)) throw InvalidArgument("grid spacing h must be > 0");
    if (!(radius > 0.0)) throw InvalidArgument("ball radius must be > 0");
    half_ = static_cast<int>(std::lround(radius / h));
    if (half_ < 1 || std::abs(half_ * h - radius) > 1e-9 * radius)
      throw InvalidArgument("ball radius must be a whole number of grid spacings");
    n_ = 2 * half_ + 1;
    mask_.assign(size(), 0);
    const double lim = radius * radius * (1.0 + 1e-12);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) {
          const double x = coord(i), y = coord(j), z = coord(k);
          if (x * x + y * y + z * z <= lim) {
            mask_[index(i, j, k)] = 1;
            ++active_;
          }
        }
  }

  double h() const { return h_; }
  double radius() const { return radius_; }
  int n() const { return n_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  std::size_t active() const { return active_; }

  double coord(int i) const { return (i - half_) * h_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  bool in_range(int i) const { return i >= 0 && i < n_; }
  bool inside(std::size_t idx) const { return mask_[idx] != 0; }
  bool inside(int i, int j, int k) const {
    return in_range(i) && in_range(j) && in_range(k) && mask_[index(i, j, k)];
  }
  std::array<int, 3> ijk(std::size_t idx) const {
    const int k = static_cast<int>(idx % n_);
    const int j = static_cast<int>((idx / n_) % n_);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(n_) * n_));
    return {i, j, k};
  }
  BlochVector point(std::size_t idx) const {
    const auto [i, j, k] = ijk(idx);
    return {coord(i), coord(j), coord(k)};
  }

  /// Node index of a lattice point, if it is active.
  std::optional<std::size_t> node_at(const BlochVector& r) const {
    const int i = static_cast<int>(std::lround(r.x / h_)) + half_;
    const int j = static_cast<int>(std::lround(r.y / h_)) + half_;
    const int k = static_cast<int>(std::lround(r.z / h_)) + half_;
    if (!inside(i, j, k)) return std::nullopt;
    return index(i, j, k);
  }

  /// Trilinear interpolation using only active cell corners (weights
  /// renormalized); points outside the ball are first projected onto it.
  double interpolate(const std::vector<double>& f, BlochVector r) const {
    const double len = r.norm();
    if (len > radius_) r *= radius_ / len;
    const double u[3] = {r.x / h_ + half_, r.y / h_ + half_, r.z / h_ + half_};
    int base[3];
    double frac[3];
    for (int d = 0; d < 3; ++d) {
      const double c = std::clamp(u[d], 0.0, static_cast<double>(n_ - 1));
      base[d] = std::min(static_cast<int>(c), n_ - 2);
      frac[d] = c - base[d];
    }
    double acc = 0.0;
    double wsum = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int i = base[0] + (c >> 2 & 1), j = base[1] + (c >> 1 & 1), k = base[2] + (c & 1);
      if (!inside(i, j, k)) continue;
      const double w = ((c >> 2 & 1) ? frac[0] : 1 - frac[0]) *
                       ((c >> 1 & 1) ? frac[1] : 1 - frac[1]) * ((c & 1) ? frac[2] : 1 - frac[2]);
      acc += w * f[index(i, j, k)];
      wsum += w;
    }
    if (wsum > 1e-12) return acc / wsum;
    // Degenerate corner weights: fall back to the nearest active node.
    double best = std::numeric_limits<double>::infinity();
    double value = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int i = base[0] + (c >> 2 & 1), j = base[1] + (c >> 1 & 1), k = base[2] + (c & 1);
      if (!inside(i, j, k)) continue;
      const double d = (BlochVector{coord(i), coord(j), coord(k)} - r).norm();
      if (d < best) {
        best = d;
        value = f[index(i, j, k)];
      }
    }
    if (!std::isfinite(best)) throw NumericalError("no active node near interpolation point");
    return value;
  }

 private:
  double h_;
  double radius_;
  int half_ = 0;
  int n_ = 0;
  std::vector<unsigned char> mask_;
  std::size_t active_ = 0;
};

struct Coefficients {
  BlochVector drift;
  BlochVector diffusion;
  double reaction = 0.0;
  double source = 0.0;
};

struct BackwardOptions {
  int nt = 100;             ///< Output time slices.
  double cfl_safety = 0.5;  ///< Fraction of the stable explicit step used.
  double umax = 10.0;       ///< Control clamp |u| <= umax.
};

/// How the requested slice step was subdivided to respect stability.
struct RefinementReport {
  double slice_dt = 0.0;
  double stable_dt = 0.0;
  long substeps_per_slice = 1;
  bool refined = false;
};

struct SlicedSolution {
  BallGrid grid;
  std::vector<double> times;                 ///< t_k = k T / nt.
  std::vector<std::vector<double>> values;   ///< S(., t_k) per slice.
  std::vector<std::vector<double>> controls;  ///< u*(., t_k) per slice.
  RefinementReport refinement;
  long guard_events = 0;  ///< Nodes where the control was forced to 0.

  double horizon() const { return times.back(); }
};

namespace detail {

inline double coordinate(const BlochVector& v, int d) { return d == 0 ? v.x : d == 1 ? v.y : v.z; }

struct Neighbourhood {
  // Axis neighbours [axis][0 = minus, 1 = plus]; -1 when inactive.
  long axis[3][2];
  // Diagonal neighbours per axis pair (01, 02, 12): (--, -+, +-, ++).
  long diag[3][4];
};

inline std::vector<Neighbourhood> neighbourhoods(const BallGrid& g) {
  std::vector<Neighbourhood> nb(g.size());
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (!g.inside(idx)) continue;
    const auto c = g.ijk(idx);
    auto at = [&](std::array<int, 3> o) -> long {
      return g.inside(o[0], o[1], o[2]) ? static_cast<long>(g.index(o[0], o[1], o[2])) : -1;
    };
    for (int d = 0; d < 3; ++d)
      for (int s = 0; s < 2; ++s) {
        auto o = c;
        o[d] += s ? 1 : -1;
        nb[idx].axis[d][s] = at(o);
      }
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 4; ++q) {
        auto o = c;
        o[pairs[p][0]] += (q & 2) ? 1 : -1;
        o[pairs[p][1]] += (q & 1) ? 1 : -1;
        nb[idx].diag[p][q] = at(o);
      }
  }
  return nb;
}

inline BlochVector central_gradient(const std::vector<double>& s, const Neighbourhood& nb,
                                    std::size_t idx, double h) {
  double g[3];
  for (int d = 0; d < 3; ++d) {
    const long m = nb.axis[d][0], p = nb.axis[d][1];
    if (m >= 0 && p >= 0)
      g[d] = (s[p] - s[m]) / (2.0 * h);
    else if (p >= 0)
      g[d] = (s[p] - s[idx]) / h;
    else if (m >= 0)
      g[d] = (s[idx] - s[m]) / h;
    else
      g[d] = 0.0;
  }
  return {g[0], g[1], g[2]};
}

/// Discrete generator 1/2 g^T D^2 S g + b . DS at one node.
inline double discrete_generator(const std::vector<double>& s, const Neighbourhood& nb,
                                 std::size_t idx, double h, const Coefficients& c) {
  const double s0 = s[idx];
  const double inv_h2 = 1.0 / (h * h);
  double acc = 0.0;
  for (int d = 0; d < 3; ++d) {
    const long m = nb.axis[d][0], p = nb.axis[d][1];
    // Missing neighbours are mirror ghosts carrying the centre value.
    const double sm = m >= 0 ? s[m] : s0;
    const double sp = p >= 0 ? s[p] : s0;
    const double gd = coordinate(c.diffusion, d);
    acc += 0.5 * gd * gd * (sp - 2.0 * s0 + sm) * inv_h2;

    // Upwind only; a ghost upwind node contributes nothing. Falling back to
    // the downwind difference puts a negative weight on the centre and
    // breaks positivity on coarse grids.
    const double b = coordinate(c.drift, d);
    if (b > 0.0)
      acc += b * (sp - s0) / h;
    else if (b < 0.0)
      acc += b * (s0 - sm) / h;
  }
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int q = 0; q < 3; ++q) {
    const auto& dg = nb.diag[q];
    if (dg[0] < 0 || dg[1] < 0 || dg[2] < 0 || dg[3] < 0) continue;
    const double cross = (s[dg[3]] - s[dg[2]] - s[dg[1]] + s[dg[0]]) * 0.25 * inv_h2;
    acc += coordinate(c.diffusion, pairs[q][0]) * coordinate(c.diffusion, pairs[q][1]) * cross;
  }
  return acc;
}

/// Explicit-step rate bound at one node for a given control.
inline double step_rate(const Coefficients& c, double h) {
  double rate = std::abs(c.reaction);
  const double g[3] = {c.diffusion.x, c.diffusion.y, c.diffusion.z};
  const double b[3] = {c.drift.x, c.drift.y, c.drift.z};
  for (int d = 0; d < 3; ++d) rate += g[d] * g[d] / (h * h) + std::abs(b[d]) / h;
  rate += (std::abs(g[0] * g[1]) + std::abs(g[0] * g[2]) + std::abs(g[1] * g[2])) / (h * h);
  return rate;
}

}  // namespace detail

template <class Problem>
SlicedSolution solve_backward(const BallGrid& grid, const Problem& problem, double horizon,
                              const BackwardOptions& opts = {}) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be > 0");
  if (opts.nt < 1) throw InvalidArgument("nt must be >= 1");
  if (!(opts.cfl_safety > 0.0 && opts.cfl_safety <= 1.0))
    throw InvalidArgument("cfl_safety must lie in (0, 1]");
  if (!(opts.umax >= 0.0)) throw InvalidArgument("umax must be >= 0");

  const auto nb = detail::neighbourhoods(grid);
  const double h = grid.h();
  std::vector<std::size_t> active;
  active.reserve(grid.active());
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    if (grid.inside(idx)) active.push_back(idx);

  // The drift is affine and the reaction quadratic in u, so the extremes of
  // the control box bound the rate.
  double max_rate = 0.0;
  for (std::size_t idx : active) {
    const BlochVector r = grid.point(idx);
    for (double u : {-opts.umax, 0.0, opts.umax})
      max_rate = std::max(max_rate, detail::step_rate(problem.coefficients(r, u), h));
  }

  SlicedSolution sol{grid, {}, {}, {}, {}, 0};
  const double slice_dt = horizon / opts.nt;
  auto& rep = sol.refinement;
  rep.slice_dt = slice_dt;
  rep.stable_dt = max_rate > 0.0 ? opts.cfl_safety / max_rate : slice_dt;
  rep.substeps_per_slice = std::max(1L, static_cast<long>(std::ceil(slice_dt / rep.stable_dt - 1e-12)));
  rep.refined = rep.substeps_per_slice > 1;
  const double tau = slice_dt / static_cast<double>(rep.substeps_per_slice);

  sol.times.resize(opts.nt + 1);
  for (int k = 0; k <= opts.nt; ++k) sol.times[k] = horizon * k / opts.nt;
  sol.values.assign(opts.nt + 1, std::vector<double>(grid.size(), 0.0));
  sol.controls.assign(opts.nt + 1, std::vector<double>(grid.size(), 0.0));

  auto& terminal = sol.values[opts.nt];
  for (std::size_t idx : active) terminal[idx] = problem.terminal(grid.point(idx));

  auto control_at = [&](const std::vector<double>& s, std::size_t idx, long& guards) {
    const BlochVector r = grid.point(idx);
    const auto u = problem.control(r, s[idx], detail::central_gradient(s, nb[idx], idx, h));
    if (!u) {
      ++guards;
      return 0.0;
    }
    return std::clamp(*u, -opts.umax, opts.umax);
  };
  auto fill_controls = [&](int k) {
    for (std::size_t idx : active)
      sol.controls[k][idx] = control_at(sol.values[k], idx, sol.guard_events);
  };
  fill_controls(opts.nt);

  std::vector<double> cur = terminal;
  std::vector<double> next(grid.size(), 0.0);
  for (int k = opts.nt - 1; k >= 0; --k) {
    for (long sub = 0; sub < rep.substeps_per_slice; ++sub) {
      for (std::size_t idx : active) {
        const double u = control_at(cur, idx, sol.guard_events);
        const Coefficients c = problem.coefficients(grid.point(idx), u);
        next[idx] = cur[idx] + tau * (detail::discrete_generator(cur, nb[idx], idx, h, c) +
                                      c.reaction * cur[idx] + c.source);
        if (!std::isfinite(next[idx])) throw NumericalError("value became non-finite");
      }
      cur.swap(next);
    }
    sol.values[k] = cur;
    fill_controls(k);
  }
  return sol;
}

namespace detail {

/// Linear interpolation in time between the bracketing slices.
inline double slice_lookup(const SlicedSolution& sol, const std::vector<std::vector<double>>& data,
                           const BlochVector& r, double t) {
  const double T = sol.horizon();
  const int nt = static_cast<int>(sol.times.size()) - 1;
  const double q = std::clamp(t, 0.0, T) / T * nt;
  const int k = std::min(static_cast<int>(q), nt - 1);
  const double a = q - k;
  const double v0 = sol.grid.interpolate(data[k], r);
  if (a == 0.0) return v0;
  return (1.0 - a) * v0 + a * sol.grid.interpolate(data[k + 1], r);
}

}  // namespace detail

/// Interpolated value S(r, t).
inline double value_at(const SlicedSolution& sol, const BlochVector& r, double t) {
  return detail::slice_lookup(sol, sol.values, r, t);
}

// ---------------------------------------------------------------------------
// Risk-neutral problem on the Bloch ball

struct RiskNeutralProblem {
  SystemConfig cfg;
  double c1 = 0.1;
  double c2 = 1.0;

  double terminal(const BlochVector& r) const { return 0.5 * c2 * (1.0 - r.z); }

  std::optional<double> control(const BlochVector& r, double, const BlochVector& grad) const {
    return (grad.y * r.z - grad.z * r.y) / c1;
  }

  Coefficients coefficients(const BlochVector& r, double u) const {
    const double k = cfg.kappa();
    const double s = std::sqrt(cfg.kappa1);
    const double w = cfg.omega;
    return {{-w * r.y - 0.5 * k * r.x, w * r.x - 0.5 * k * r.y - u * r.z, -k * r.z - k + u * r.y},
            {s * (1.0 + r.z - r.x * r.x), -s * r.x * r.y, -s * r.x * (1.0 + r.z)},
            0.0,
            0.5 * (1.0 - r.z + c1 * u * u)};
  }
};

inline SlicedSolution solve_risk_neutral(const BallGrid& grid, const SystemConfig& cfg, double c1,
                                         double c2, double horizon, int nt,
                                         BackwardOptions opts = {}) {
  cfg.validate();
  if (!(c1 > 0.0)) throw InvalidArgument("c1 must be > 0");
  if (!(c2 >= 0.0)) throw InvalidArgument("c2 must be >= 0");
  if (std::abs(grid.radius() - 1.0) > 1e-12) throw InvalidArgument("risk-neutral grid must be the unit ball");
  opts.nt = nt;
  return solve_backward(grid, RiskNeutralProblem{cfg, c1, c2}, horizon, opts);
}

/// Optimal feedback u*(r, t) by interpolating the per-slice law.
inline double feedback_rn(const SlicedSolution& sol, const BlochVector& r, double t) {
  return detail::slice_lookup(sol, sol.controls, r, t);
}

// ---------------------------------------------------------------------------
// Risk-sensitive problem, reduced by homogeneity to the slice n = n0:
// S(n, r) = (n / n0) w(n0 r / n). With the extended-state coefficients
// (f_n, f_r) and (g_n, g_r), w solves
//   w_t + 1/2 gt^T D^2 w gt + b . Dw + (f_n / n0) w = 0,
//   gt = g_r - (g_n / n0) r,   b = f_r - (f_n / n0) r,
// on the ball |r| <= n0.

inline constexpr double kRiskValueFloor = 1e-12;

struct RiskSensitiveProblem {
  SystemConfig cfg;
  double mu = 1.0;
  double c1 = 0.1;
  double c2 = 1.0;
  double n0 = 1.0;

  double terminal(const BlochVector& r) const { return 0.5 * (n0 - r.z) * std::exp(mu * c2); }

  std::optional<double> control(const BlochVector& r, double w, const BlochVector& grad) const {
    if (w < -kRiskValueFloor) throw NumericalError("risk-sensitive value became negative");
    if (w < kRiskValueFloor) return std::nullopt;
    return (grad.y * r.z - grad.z * r.y) / (mu * c1 * w);
  }

  Coefficients coefficients(const BlochVector& r, double u) const {
    const double k = cfg.kappa();
    const double s = std::sqrt(cfg.kappa1);
    const double w = cfg.omega;
    const double m = 0.5 * mu;
    const double zr = r.z / n0;
    return {{-w * r.y - 0.5 * k * r.x + m * r.x * zr, w * r.x - 0.5 * k * r.y - u * r.z + m * r.y * zr,
             -k * r.z - k * n0 + u * r.y + m * (r.z * zr - n0)},
            {s * (n0 + r.z - r.x * r.x / n0), -s * r.x * r.y / n0, -s * r.x * (1.0 + zr)},
            m * (1.0 + c1 * u * u - zr),
            0.0};
  }
};

inline SlicedSolution solve_risk_sensitive(const BallGrid& grid, const SystemConfig& cfg, double mu,
                                           double c1, double c2, double horizon, int nt,
                                           BackwardOptions opts = {}) {
  cfg.validate();
  if (!(mu > 0.0)) throw InvalidArgument("mu must be > 0");
  if (!(c1 > 0.0)) throw InvalidArgument("c1 must be > 0");
  if (!(c2 >= 0.0)) throw InvalidArgument("c2 must be >= 0");
  opts.nt = nt;
  return solve_backward(grid, RiskSensitiveProblem{cfg, mu, c1, c2, grid.radius()}, horizon, opts);
}

/// Value on the full extended state, V(n, x, y, z) = (n / n0) w(n0 r / n).
inline double risk_value(const SlicedSolution& sol, double n, const BlochVector& r, double t) {
  if (!(n > 0.0)) throw InvalidArgument("n must be > 0");
  const double n0 = sol.grid.radius();
  return n / n0 * value_at(sol, r * (n0 / n), t);
}

/// Feedback u^{mu,*}(n, r, t); the law is invariant under scaling of the
/// extended state.
inline double feedback_rs(const SlicedSolution& sol, double n, const BlochVector& r, double t) {
  if (!(n > 0.0)) throw InvalidArgument("n must be > 0");
  return detail::slice_lookup(sol, sol.controls, r * (sol.grid.radius() / n), t);
}

}  // namespace qcontrol
