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

// Quantum filters for the homodyne-monitored atom in Bloch coordinates:
// the normalized (Kushner-Stratonovich form) filter, the linear unnormalized
// filter in extended coordinates (n, x, y, z), and its risk-sensitive
// variant. Records are increments dY of the monitored quadrature.
//
// With s = sqrt(kappa1), kappa = kappa1 + kappa2, the innovation is
// dW = dY - s x dt, and the normalized filter reads
//   dx = (-w y - kappa x/2) dt         + s (1 + z - x^2) dW
//   dy = ( w x - kappa y/2 - u z) dt   - s x y dW
//   dz = (-kappa z - kappa + u y) dt   - s x (1 + z) dW

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"
#include "qcontrol/hybrid.hpp"
#include "qcontrol/noise.hpp"

namespace qcontrol {

struct FilterState {
  BlochVector r;
};

/// Unnormalized conditional state (n, x, y, z) = tr[rho (I, sx, sy, sz)].
struct ExtendedBlochVector {
  double n = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  ExtendedBlochVector& operator+=(const ExtendedBlochVector& o) {
    n += o.n;
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  ExtendedBlochVector& operator*=(double s) {
    n *= s;
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  friend ExtendedBlochVector operator+(ExtendedBlochVector a, const ExtendedBlochVector& b) {
    return a += b;
  }
  friend ExtendedBlochVector operator*(ExtendedBlochVector a, double s) { return a *= s; }
  friend ExtendedBlochVector operator*(double s, ExtendedBlochVector a) { return a *= s; }
  friend bool operator==(const ExtendedBlochVector&, const ExtendedBlochVector&) = default;

  double max_abs_diff(const ExtendedBlochVector& o) const {
    return std::max({std::abs(n - o.n), std::abs(x - o.x), std::abs(y - o.y), std::abs(z - o.z)});
  }
};

inline ExtendedBlochVector extend(const BlochVector& r, double n = 1.0) {
  return {n, n * r.x, n * r.y, n * r.z};
}

struct MeasurementRecord {
  double dt = 0.0;
  std::vector<double> dY;
};

enum class Scheme {
  kEulerMaruyama,
  /// Adds the strong-order-one correction 1/2 (Db b)(dY^2 - dt).
  kMilstein,
};

struct FilterOptions {
  Scheme scheme = Scheme::kEulerMaruyama;
  /// Pull normalized states that leave the Bloch ball back onto the sphere.
  bool project = true;
};

/// Feedback from the current time and conditional Bloch vector.
using Feedback = std::function<double(double, const BlochVector&)>;

inline Feedback open_loop(ControlSignal u) {
  return [u = std::move(u)](double t, const BlochVector&) { return u(t); };
}

inline Feedback zero_feedback() {
  return [](double, const BlochVector&) { return 0.0; };
}

/// Radial projection onto the closed unit ball. Returns true if applied.
inline bool project_to_ball(BlochVector& r) {
  const double len = r.norm();
  if (len <= 1.0) return false;
  r *= 1.0 / len;
  return true;
}

/// One step of the controlled normalized filter driven by the increment dY.
inline FilterState filter_step_normalized(const FilterState& s, double u, double dY,
                                          const SystemConfig& cfg, const FilterOptions& opts = {},
                                          bool* projected = nullptr) {
  const double dt = cfg.dt;
  const double k = cfg.kappa();
  const double sq = std::sqrt(cfg.kappa1);
  const double w = cfg.omega;
  const auto& [x, y, z] = s.r;

  const double dW = dY - sq * x * dt;
  const double bx = sq * (1.0 + z - x * x);
  const double by = -sq * x * y;
  const double bz = -sq * x * (1.0 + z);

  BlochVector r{x + (-w * y - 0.5 * k * x) * dt + bx * dW,
                y + (w * x - 0.5 * k * y - u * z) * dt + by * dW,
                z + (-k * z - k + u * y) * dt + bz * dW};
  if (opts.scheme == Scheme::kMilstein) {
    const double q = 0.5 * (dY * dY - dt);
    r.x += q * sq * (-2.0 * x * bx + bz);
    r.y += q * sq * (-y * bx - x * by);
    r.z += q * sq * (-(1.0 + z) * bx - x * bz);
  }
  const bool hit = opts.project && project_to_ball(r);
  if (projected) *projected = hit;
  return {r};
}

namespace detail {

/// Linear unnormalized filter increment, optionally with the risk terms.
inline ExtendedBlochVector unnormalized_step(const ExtendedBlochVector& s, double u, double dY,
                                             const SystemConfig& cfg, const FilterOptions& opts,
                                             double mu, double c1) {
  const double dt = cfg.dt;
  const double k = cfg.kappa();
  const double sq = std::sqrt(cfg.kappa1);
  const double w = cfg.omega;
  const auto& [n, x, y, z] = s;

  ExtendedBlochVector d{0.0, (-w * y - 0.5 * k * x) * dt, (w * x - 0.5 * k * y - u * z) * dt,
                        (-k * z - k * n + u * y) * dt};
  if (mu != 0.0) {
    const double h = 0.5 * mu * dt;
    const double g = 1.0 + c1 * u * u;
    d.n += h * (g * n - z);
    d.x += h * g * x;
    d.y += h * g * y;
    d.z += h * (g * z - n);
  }
  d.n += sq * x * dY;
  d.x += sq * (n + z) * dY;
  d.z -= sq * x * dY;
  if (opts.scheme == Scheme::kMilstein) {
    // Diffusion is linear, B r = s (x, n + z, 0, -x); B^2 r = s^2 (n + z)(1, 0, 0, -1).
    const double q = 0.5 * (dY * dY - dt) * cfg.kappa1 * (n + z);
    d.n += q;
    d.z -= q;
  }
  ExtendedBlochVector out = s + d;
  if (!(out.n > 0.0))
    throw NumericalError("normalization factor became non-positive; reduce dt");
  return out;
}

}  // namespace detail

/// One step of the controlled unnormalized filter (u = 0 is the free atom).
inline ExtendedBlochVector filter_step_unnormalized(const ExtendedBlochVector& s, double dY,
                                                    const SystemConfig& cfg, double u = 0.0,
                                                    const FilterOptions& opts = {}) {
  if (!(s.n > 0.0)) throw InvalidArgument("normalization factor must be > 0");
  return detail::unnormalized_step(s, u, dY, cfg, opts, 0.0, 0.0);
}

/// One step of the risk-sensitive filter, which adds the running-cost
/// superoperator (mu/2)(C rho + rho C) with C = (I - sz)/2 + c1 u^2 I / 2.
inline ExtendedBlochVector risk_filter_step(const ExtendedBlochVector& s, double u, double mu,
                                            double c1, double dY, const SystemConfig& cfg,
                                            const FilterOptions& opts = {}) {
  if (!(mu >= 0.0)) throw InvalidArgument("risk parameter mu must be >= 0");
  if (!(c1 > 0.0)) throw InvalidArgument("control weight c1 must be > 0");
  if (!(s.n > 0.0)) throw InvalidArgument("normalization factor must be > 0");
  return detail::unnormalized_step(s, u, dY, cfg, opts, mu, c1);
}

/// Risk-sensitive terminal payoff 1/2 (n - z) e^{mu c2}.
inline double risk_cost_readout(const ExtendedBlochVector& s, double mu, double c2) {
  return 0.5 * (s.n - s.z) * std::exp(mu * c2);
}

inline FilterState normalize(const ExtendedBlochVector& s) {
  if (!(s.n > 0.0)) throw InvalidArgument("cannot normalize: n must be > 0");
  return {{s.x / s.n, s.y / s.n, s.z / s.n}};
}

inline long step_count(double t_final, double dt) {
  if (!(t_final > 0.0)) throw InvalidArgument("t_final must be > 0");
  return std::max(1L, std::lround(t_final / dt));
}

struct FilterTrajectory {
  std::vector<double> times;
  std::vector<BlochVector> states;
  /// Control applied on [t_k, t_k+1); one entry per step.
  std::vector<double> controls;
  long projections = 0;
};

struct FilterRun {
  MeasurementRecord record;
  FilterTrajectory trajectory;
};

/// Generates a record under the physical law, dY = dW + s x dt with dW
/// drawn from `noise`, and co-integrates the filter. Every state is
/// obtained by stepping from the stored increment, so replay() on the
/// record reproduces the trajectory bit for bit.
inline FilterRun simulate_record(const SystemConfig& cfg, const Feedback& u, NoiseSource& noise,
                                 double t_final, const BlochVector& r0,
                                 const FilterOptions& opts = {}) {
  cfg.validate();
  if (r0.norm() > 1.0 + kBlochNormTolerance) throw InvalidArgument("initial state outside ball");
  const long steps = step_count(t_final, cfg.dt);
  const double sq = std::sqrt(cfg.kappa1);

  FilterRun run;
  run.record.dt = cfg.dt;
  run.record.dY.reserve(steps);
  auto& tr = run.trajectory;
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  tr.controls.reserve(steps);

  FilterState s{r0};
  tr.times.push_back(0.0);
  tr.states.push_back(s.r);
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const double uk = u(t, s.r);
    const double dY = noise.increment() + sq * s.r.x * cfg.dt;
    bool hit = false;
    s = filter_step_normalized(s, uk, dY, cfg, opts, &hit);
    tr.projections += hit;
    run.record.dY.push_back(dY);
    tr.controls.push_back(uk);
    tr.times.push_back(static_cast<double>(k + 1) * cfg.dt);
    tr.states.push_back(s.r);
  }
  return run;
}

inline FilterRun simulate_record(const SystemConfig& cfg, const ControlSignal& u,
                                 NoiseSource& noise, double t_final, const BlochVector& r0,
                                 const FilterOptions& opts = {}) {
  return simulate_record(cfg, open_loop(u), noise, t_final, r0, opts);
}

/// Runs the normalized filter on an existing record.
inline FilterTrajectory replay(const SystemConfig& cfg, const MeasurementRecord& record,
                               const Feedback& u, const BlochVector& r0,
                               const FilterOptions& opts = {}) {
  SystemConfig c = cfg;
  c.dt = record.dt;
  c.validate();
  FilterTrajectory tr;
  FilterState s{r0};
  tr.times.push_back(0.0);
  tr.states.push_back(s.r);
  for (std::size_t k = 0; k < record.dY.size(); ++k) {
    const double t = static_cast<double>(k) * c.dt;
    const double uk = u(t, s.r);
    bool hit = false;
    s = filter_step_normalized(s, uk, record.dY[k], c, opts, &hit);
    tr.projections += hit;
    tr.controls.push_back(uk);
    tr.times.push_back(static_cast<double>(k + 1) * c.dt);
    tr.states.push_back(s.r);
  }
  return tr;
}

/// Runs the unnormalized filter on a record with an open-loop control.
inline std::vector<ExtendedBlochVector> replay_unnormalized(const SystemConfig& cfg,
                                                            const MeasurementRecord& record,
                                                            const ControlSignal& u,
                                                            const ExtendedBlochVector& s0,
                                                            const FilterOptions& opts = {}) {
  SystemConfig c = cfg;
  c.dt = record.dt;
  c.validate();
  std::vector<ExtendedBlochVector> out;
  out.reserve(record.dY.size() + 1);
  ExtendedBlochVector s = s0;
  out.push_back(s);
  for (std::size_t k = 0; k < record.dY.size(); ++k) {
    s = filter_step_unnormalized(s, record.dY[k], c, u(static_cast<double>(k) * c.dt), opts);
    out.push_back(s);
  }
  return out;
}

/// Under the reference law the record itself is a Wiener process.
inline MeasurementRecord reference_record(NoiseSource& noise, double t_final) {
  MeasurementRecord rec;
  rec.dt = noise.dt();
  const long steps = step_count(t_final, rec.dt);
  rec.dY.reserve(steps);
  for (long k = 0; k < steps; ++k) rec.dY.push_back(noise.increment());
  return rec;
}

// ---------------------------------------------------------------------------
// Ensembles

/// Runs `paths` independent jobs, each writing `width` values into its own
/// slot. Results depend only on the path index, never on the thread layout.
template <class PathFn>
std::vector<double> run_paths(std::size_t paths, std::size_t width, PathFn&& fn,
                              unsigned threads = 0) {
  std::vector<double> out(paths * width);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(paths, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t p = next.fetch_add(1);
      if (p >= paths || failed.load()) return;
      try {
        fn(p, out.data() + p * width);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct Estimate {
  double mean = 0.0;
  double se = 0.0;  ///< Standard error of the mean.
};

/// Mean and standard error of column `col` of a paths x width table,
/// accumulated in path order (Welford).
inline Estimate column_estimate(const std::vector<double>& table, std::size_t width,
                                std::size_t col) {
  const std::size_t paths = table.size() / width;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    const double v = table[p * width + col];
    const double delta = v - mean;
    mean += delta / static_cast<double>(p + 1);
    m2 += delta * (v - mean);
  }
  if (paths < 2) return {mean, 0.0};
  const double var = std::max(0.0, m2 / static_cast<double>(paths - 1));
  return {mean, std::sqrt(var / static_cast<double>(paths))};
}

struct MonteCarloSummary {
  std::vector<double> times;
  std::vector<BlochVector> mean;
  std::vector<BlochVector> se;
  long projections = 0;
  long steps = 0;  ///< Total filter steps over all paths.
};

/// Sample mean of the conditional Bloch vector at the requested times
/// (snapped to the step grid). Path p uses noise stream p of `seed`.
inline MonteCarloSummary monte_carlo_mean(const SystemConfig& cfg, const Feedback& u,
                                          std::size_t paths, const std::vector<double>& t_grid,
                                          std::uint64_t seed, const BlochVector& r0,
                                          const FilterOptions& opts = {}, unsigned threads = 0) {
  cfg.validate();
  if (paths < 2) throw InvalidArgument("monte carlo needs at least 2 paths");
  if (t_grid.empty()) throw InvalidArgument("monte carlo needs at least one checkpoint");
  std::vector<long> marks;
  for (double t : t_grid) {
    if (!(t >= 0.0)) throw InvalidArgument("checkpoint times must be >= 0");
    marks.push_back(std::lround(t / cfg.dt));
  }
  if (!std::is_sorted(marks.begin(), marks.end()))
    throw InvalidArgument("checkpoint times must be increasing");
  const long steps = marks.back();
  const std::size_t width = 3 * marks.size() + 1;
  const double sq = std::sqrt(cfg.kappa1);

  const auto table = run_paths(
      paths, width,
      [&](std::size_t p, double* out) {
        NoiseSource noise(seed, p, cfg.dt);
        FilterState s{r0};
        std::size_t m = 0;
        long hits = 0;
        for (long k = 0;; ++k) {
          while (m < marks.size() && marks[m] == k) {
            out[3 * m] = s.r.x;
            out[3 * m + 1] = s.r.y;
            out[3 * m + 2] = s.r.z;
            ++m;
          }
          if (k == steps) break;
          const double uk = u(static_cast<double>(k) * cfg.dt, s.r);
          const double dY = noise.increment() + sq * s.r.x * cfg.dt;
          bool hit = false;
          s = filter_step_normalized(s, uk, dY, cfg, opts, &hit);
          hits += hit;
        }
        out[width - 1] = static_cast<double>(hits);
      },
      threads);

  MonteCarloSummary sum;
  for (std::size_t m = 0; m < marks.size(); ++m) {
    sum.times.push_back(static_cast<double>(marks[m]) * cfg.dt);
    const Estimate ex = column_estimate(table, width, 3 * m);
    const Estimate ey = column_estimate(table, width, 3 * m + 1);
    const Estimate ez = column_estimate(table, width, 3 * m + 2);
    sum.mean.push_back({ex.mean, ey.mean, ez.mean});
    sum.se.push_back({ex.se, ey.se, ez.se});
  }
  for (std::size_t p = 0; p < paths; ++p)
    sum.projections += static_cast<long>(table[p * width + width - 1]);
  sum.steps = steps * static_cast<long>(paths);
  return sum;
}

/// Deterministic averaged dynamics (master equation in Bloch form) for an
/// open-loop control, sampled at the requested times.
inline std::vector<BlochVector> master_bloch_solution(const SystemConfig& cfg,
                                                      const ControlSignal& u,
                                                      const BlochVector& r0,
                                                      const std::vector<double>& t_grid) {
  cfg.validate();
  const auto rhs = [&](double t, const BlochVector& r) {
    return hybrid_rhs(Dynamics::kRelaxing, cfg, r, u(t));
  };
  std::vector<BlochVector> out;
  BlochVector r = r0;
  double t = 0.0;
  for (double target : t_grid) {
    const double span = target - t;
    if (span < 0.0) throw InvalidArgument("times must be increasing");
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / cfg.dt - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (long k = 0; k < steps; ++k) r = rk4_step(rhs, t + static_cast<double>(k) * h, r, h);
      t = target;
    }
    out.push_back(r);
  }
  return out;
}

struct CostWeights {
  double c1 = 0.1;  ///< Control effort weight.
  double c2 = 1.0;  ///< Terminal weight.
};

/// Closed-loop Monte Carlo estimate of
///   J = E[ 1/2 int_0^T (1 - z + c1 u^2) dt + c2/2 (1 - z(T)) ]
/// evaluated along the conditional state (left-point sum).
inline Estimate estimate_risk_neutral_cost(const SystemConfig& cfg, const Feedback& u,
                                           const CostWeights& w, double horizon,
                                           std::size_t paths, std::uint64_t seed,
                                           const BlochVector& r0, const FilterOptions& opts = {},
                                           unsigned threads = 0) {
  cfg.validate();
  if (paths < 2) throw InvalidArgument("cost estimate needs at least 2 paths");
  const long steps = step_count(horizon, cfg.dt);
  const double sq = std::sqrt(cfg.kappa1);
  const auto table = run_paths(
      paths, 1,
      [&](std::size_t p, double* out) {
        NoiseSource noise(seed, p, cfg.dt);
        FilterState s{r0};
        double running = 0.0;
        for (long k = 0; k < steps; ++k) {
          const double uk = u(static_cast<double>(k) * cfg.dt, s.r);
          running += 0.5 * (1.0 - s.r.z + w.c1 * uk * uk) * cfg.dt;
          const double dY = noise.increment() + sq * s.r.x * cfg.dt;
          s = filter_step_normalized(s, uk, dY, cfg, opts);
        }
        out[0] = running + 0.5 * w.c2 * (1.0 - s.r.z);
      },
      threads);
  return column_estimate(table, 1, 0);
}

/// Feedback on the extended state for the risk-sensitive problem.
using ExtendedFeedback = std::function<double(double, const ExtendedBlochVector&)>;

/// Reference-law estimate of J^mu = E0[ 1/2 (n(T) - z(T)) e^{mu c2} ].
inline Estimate estimate_risk_sensitive_cost(const SystemConfig& cfg, const ExtendedFeedback& u,
                                             double mu, const CostWeights& w, double horizon,
                                             std::size_t paths, std::uint64_t seed,
                                             const BlochVector& r0,
                                             const FilterOptions& opts = {},
                                             unsigned threads = 0) {
  cfg.validate();
  if (paths < 2) throw InvalidArgument("cost estimate needs at least 2 paths");
  const long steps = step_count(horizon, cfg.dt);
  const auto table = run_paths(
      paths, 1,
      [&](std::size_t p, double* out) {
        NoiseSource noise(seed, p, cfg.dt);
        ExtendedBlochVector s = extend(r0);
        for (long k = 0; k < steps; ++k) {
          const double uk = u(static_cast<double>(k) * cfg.dt, s);
          s = risk_filter_step(s, uk, mu, w.c1, noise.increment(), cfg, opts);
        }
        out[0] = risk_cost_readout(s, mu, w.c2);
      },
      threads);
  return column_estimate(table, 1, 0);
}

}  // namespace qcontrol
