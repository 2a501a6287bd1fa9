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

// Deterministic hybrid dynamics on the Bloch ball: continuous flow (closed
// or relaxing) punctuated by instantaneous rotations in the yz plane.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"

namespace qcontrol {

/// Atom parameters shared by the simulators and filters.
struct SystemConfig {
  double omega = 0.0;   ///< Detuning / level splitting (angular frequency).
  double kappa1 = 0.0;  ///< Monitored channel rate.
  double kappa2 = 0.0;  ///< Unmonitored channel rate.
  double dt = 1e-3;     ///< Integration step.

  double kappa() const { return kappa1 + kappa2; }

  void validate() const {
    if (!std::isfinite(omega)) throw InvalidArgument("omega must be finite");
    if (!(kappa1 >= 0.0) || !std::isfinite(kappa1)) throw InvalidArgument("kappa1 must be >= 0");
    if (!(kappa2 >= 0.0) || !std::isfinite(kappa2)) throw InvalidArgument("kappa2 must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be > 0");
  }
};

/// Open-loop control signal t -> u(t).
using ControlSignal = std::function<double(double)>;

inline ControlSignal constant_control(double u) {
  return [u](double) { return u; };
}

/// Skew generator of the closed atom with H(u) = (omega sz + u sx)/2.
inline BlochVector closed_bloch_rhs(const BlochVector& r, double u, double omega) {
  return {-omega * r.y, omega * r.x - u * r.z, u * r.y};
}

/// Relaxation toward the ground state at total rate kappa (no control).
inline BlochVector relaxation_bloch_rhs(const BlochVector& r, double omega, double kappa) {
  return {-0.5 * kappa * r.x - omega * r.y, -0.5 * kappa * r.y + omega * r.x,
          -kappa * r.z - kappa};
}

/// Impulse e^{-i v sx}: rotation by v in the yz plane.
inline BlochVector apply_impulse(const BlochVector& r, double v) {
  const double c = std::cos(v);
  const double s = std::sin(v);
  return {r.x, c * r.y - s * r.z, s * r.y + c * r.z};
}

/// One classical Runge-Kutta step of r' = f(t, r).
template <class Rhs>
BlochVector rk4_step(const Rhs& f, double t, const BlochVector& r, double h) {
  const BlochVector k1 = f(t, r);
  const BlochVector k2 = f(t + 0.5 * h, r + k1 * (0.5 * h));
  const BlochVector k3 = f(t + 0.5 * h, r + k2 * (0.5 * h));
  const BlochVector k4 = f(t + h, r + k3 * h);
  return r + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
}

struct Impulse {
  double time = 0.0;
  double angle = 0.0;
};

/// Time-ordered impulse sequence, optionally with a periodic train.
class ImpulseSchedule {
 public:
  struct Periodic {
    double period = 1.0;
    double angle = 0.0;
    double first = 0.0;  ///< Time of the first pulse in the train.
  };

  ImpulseSchedule() = default;

  explicit ImpulseSchedule(std::vector<Impulse> entries, std::optional<Periodic> periodic = {})
      : entries_(std::move(entries)), periodic_(periodic) {
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (!(entries_[k].time >= 0.0)) throw InvalidArgument("impulse times must be >= 0");
      if (k > 0 && !(entries_[k].time > entries_[k - 1].time))
        throw InvalidArgument("impulse times must be strictly increasing");
    }
    if (periodic_) {
      if (!(periodic_->period > 0.0)) throw InvalidArgument("impulse period must be > 0");
      if (!(periodic_->first >= 0.0)) throw InvalidArgument("first periodic impulse must be >= 0");
    }
  }

  static ImpulseSchedule periodic(double period, double angle, double first = 0.0) {
    return ImpulseSchedule({}, Periodic{period, angle, first});
  }

  const std::vector<Impulse>& entries() const { return entries_; }
  const std::optional<Periodic>& periodic_train() const { return periodic_; }

  /// All impulses with time <= t_final, merged in time order. Explicit
  /// entries precede a periodic pulse at the same instant.
  std::vector<Impulse> until(double t_final) const {
    std::vector<Impulse> out;
    for (const auto& e : entries_)
      if (e.time <= t_final) out.push_back(e);
    if (periodic_) {
      // Pulse times first + k*period, generated by index so they do not drift.
      for (long k = 0;; ++k) {
        const double t = periodic_->first + static_cast<double>(k) * periodic_->period;
        if (t > t_final * (1.0 + 1e-14) + 1e-14) break;
        out.push_back({std::min(t, t_final), periodic_->angle});
      }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Impulse& a, const Impulse& b) { return a.time < b.time; });
    return out;
  }

 private:
  std::vector<Impulse> entries_;
  std::optional<Periodic> periodic_;
};

enum class Dynamics { kClosed, kRelaxing };

struct Trajectory {
  std::vector<double> times;
  std::vector<BlochVector> states;
  /// Indices of post-impulse samples; the preceding sample is the pre-impulse
  /// state at the same time.
  std::vector<std::size_t> events;
};

/// Continuous Bloch drift for the chosen dynamics with control u.
inline BlochVector hybrid_rhs(Dynamics mode, const SystemConfig& cfg, const BlochVector& r,
                              double u) {
  if (mode == Dynamics::kClosed) return closed_bloch_rhs(r, u, cfg.omega);
  BlochVector d = relaxation_bloch_rhs(r, cfg.omega, cfg.kappa());
  d.y -= u * r.z;
  d.z += u * r.y;
  return d;
}

/// Integrates between impulses with fixed-step RK4; each impulse time is a
/// step boundary and the rotation is applied after reaching it.
inline Trajectory simulate_hybrid(const SystemConfig& cfg, const ImpulseSchedule& schedule,
                                  const ControlSignal& u, double t_final, Dynamics mode,
                                  const BlochVector& r0) {
  cfg.validate();
  if (!(t_final > 0.0)) throw InvalidArgument("t_final must be > 0");
  if (r0.norm() > 1.0 + kBlochNormTolerance)
    throw InvalidArgument("initial Bloch vector lies outside the ball");

  const auto impulses = schedule.until(t_final);
  const auto rhs = [&](double t, const BlochVector& r) { return hybrid_rhs(mode, cfg, r, u(t)); };

  Trajectory traj;
  const auto expected = static_cast<std::size_t>(t_final / cfg.dt) + 2 * impulses.size() + 2;
  traj.times.reserve(expected);
  traj.states.reserve(expected);

  double t = 0.0;
  BlochVector r = r0;
  traj.times.push_back(t);
  traj.states.push_back(r);

  auto integrate_to = [&](double t_end) {
    const double span = t_end - t;
    if (span <= 0.0) return;
    const auto steps = static_cast<long>(std::ceil(span / cfg.dt - 1e-9));
    const double h = span / static_cast<double>(steps);
    const double t0 = t;
    for (long k = 0; k < steps; ++k) {
      r = rk4_step(rhs, t, r, h);
      t = (k + 1 == steps) ? t_end : t0 + static_cast<double>(k + 1) * h;
      traj.times.push_back(t);
      traj.states.push_back(r);
    }
  };

  for (const auto& imp : impulses) {
    integrate_to(imp.time);
    r = apply_impulse(r, imp.angle);
    traj.times.push_back(t);
    traj.states.push_back(r);
    traj.events.push_back(traj.states.size() - 1);
  }
  integrate_to(t_final);
  return traj;
}

/// Flow for one period (u = 0, relaxing dynamics) followed by the impulse.
inline BlochVector period_map(const SystemConfig& cfg, double period, double v,
                              const BlochVector& r) {
  const auto steps = static_cast<long>(std::ceil(period / cfg.dt - 1e-9));
  const double h = period / static_cast<double>(steps);
  const auto rhs = [&](double, const BlochVector& s) {
    return hybrid_rhs(Dynamics::kRelaxing, cfg, s, 0.0);
  };
  BlochVector s = r;
  for (long k = 0; k < steps; ++k) s = rk4_step(rhs, static_cast<double>(k) * h, s, h);
  return apply_impulse(s, v);
}

struct SteadyStateOptions {
  double tolerance = 1e-10;
  long max_iterations = 100000;
  BlochVector start{0.0, 0.0, 0.0};
};

struct SteadyState {
  BlochVector state;  ///< Post-impulse fixed point.
  long iterations = 0;
};

/// Fixed point of the period map by direct iteration, sampled immediately
/// after the impulse.
inline SteadyState periodic_steady_state(const SystemConfig& cfg, double period, double v,
                                         const SteadyStateOptions& opts = {}) {
  cfg.validate();
  if (!(cfg.kappa() > 0.0)) throw InvalidArgument("steady state requires kappa > 0");
  if (!(period > 0.0)) throw InvalidArgument("period must be > 0");
  BlochVector r = opts.start;
  for (long k = 1; k <= opts.max_iterations; ++k) {
    const BlochVector next = period_map(cfg, period, v, r);
    const double change = next.max_abs_diff(r);
    r = next;
    if (change < opts.tolerance) return {r, k};
  }
  throw ConvergenceError("periodic steady state did not converge",
                         period_map(cfg, period, v, r).max_abs_diff(r), opts.max_iterations);
}

/// Affine representation r -> M r + b of the period map.
struct AffineMap {
  std::array<std::array<double, 3>, 3> m{};
  BlochVector b;
};

inline AffineMap period_map_affine(const SystemConfig& cfg, double period, double v) {
  AffineMap a;
  a.b = period_map(cfg, period, v, {0.0, 0.0, 0.0});
  const std::array<BlochVector, 3> basis{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int j = 0; j < 3; ++j) {
    const BlochVector col = period_map(cfg, period, v, basis[j]) - a.b;
    a.m[0][j] = col.x;
    a.m[1][j] = col.y;
    a.m[2][j] = col.z;
  }
  return a;
}

/// Solves (I - M) r* = b for the period map's fixed point.
inline BlochVector periodic_fixed_point_affine(const SystemConfig& cfg, double period, double v) {
  cfg.validate();
  if (!(cfg.kappa() > 0.0)) throw InvalidArgument("steady state requires kappa > 0");
  if (!(period > 0.0)) throw InvalidArgument("period must be > 0");
  const AffineMap a = period_map_affine(cfg, period, v);
  std::array<std::array<double, 4>, 3> aug{};
  const std::array<double, 3> rhs{a.b.x, a.b.y, a.b.z};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) aug[i][j] = (i == j ? 1.0 : 0.0) - a.m[i][j];
    aug[i][3] = rhs[i];
  }
  // Gaussian elimination with partial pivoting.
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int i = c + 1; i < 3; ++i)
      if (std::abs(aug[i][c]) > std::abs(aug[piv][c])) piv = i;
    if (std::abs(aug[piv][c]) < 1e-14) throw NumericalError("period map has no unique fixed point");
    std::swap(aug[c], aug[piv]);
    for (int i = 0; i < 3; ++i) {
      if (i == c) continue;
      const double f = aug[i][c] / aug[c][c];
      for (int j = c; j < 4; ++j) aug[i][j] -= f * aug[c][j];
    }
  }
  return {aug[0][3] / aug[0][0], aug[1][3] / aug[1][1], aug[2][3] / aug[2][2]};
}

}  // namespace qcontrol
