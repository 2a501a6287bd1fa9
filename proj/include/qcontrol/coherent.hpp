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

// Direct-coupling coherent feedback between two qubits, a plant P and a
// controller C, driven by CNOT impulses with trivial drift in between.
//
// Ordering |q_P q_C>, plant first. Bit 0 is the ground state |down> and bit
// 1 the excited state |up>; with |up> = (1,0)^T this puts |q_P q_C> at
// Kronecker index 2 (1 - q_P) + (1 - q_C).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"

namespace qcontrol {

using TwoQubitState = std::array<Complex, 4>;
using SingleQubitState = std::array<Complex, 2>;

inline constexpr double kUnitNormTolerance = 1e-12;

enum class Party { kPlant, kController };

/// Kronecker index of the basis ket |q_P q_C>.
constexpr std::size_t basis_index(int plant_bit, int controller_bit) {
  return static_cast<std::size_t>(2 * (1 - plant_bit) + (1 - controller_bit));
}

inline double norm(const TwoQubitState& psi) {
  double s = 0.0;
  for (const auto& a : psi) s += std::norm(a);
  return std::sqrt(s);
}

/// CNOT with `control` as the control bit: flips the other bit when the
/// control bit is 1.
inline Matrix4 cnot(Party control) {
  Matrix4 m;
  for (int p = 0; p < 2; ++p)
    for (int c = 0; c < 2; ++c) {
      const int p2 = control == Party::kController ? p ^ c : p;
      const int c2 = control == Party::kPlant ? c ^ p : c;
      m(basis_index(p2, c2), basis_index(p, c)) = 1.0;
    }
  return m;
}

inline bool is_unitary(const Matrix4& u, double tol = kUnitNormTolerance) {
  return max_abs_diff(Matrix4(u.adjoint() * u), Matrix4::identity()) <= tol;
}

inline TwoQubitState apply_unitary(const Matrix4& u, const TwoQubitState& psi) {
  TwoQubitState out{};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) out[r] += u(r, c) * psi[c];
  return out;
}

inline TwoQubitState product_state(const SingleQubitState& plant,
                                   const SingleQubitState& controller) {
  TwoQubitState out{};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) out[2 * i + j] = plant[i] * controller[j];
  return out;
}

inline Matrix4 density(const TwoQubitState& psi) {
  Matrix4 m;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) m(r, c) = psi[r] * std::conj(psi[c]);
  return m;
}

inline Matrix2 reduced_state(const TwoQubitState& psi, Party keep) {
  return partial_trace(density(psi),
                       keep == Party::kPlant ? Subsystem::kSecond : Subsystem::kFirst);
}

struct TimedUnitary {
  double time = 0.0;
  Matrix4 unitary;
};

/// Applies the impulses in time order; the state is constant in between.
inline TwoQubitState apply_direct_schedule(const TwoQubitState& psi,
                                           const std::vector<TimedUnitary>& schedule) {
  if (std::abs(norm(psi) - 1.0) > kUnitNormTolerance)
    throw InvalidArgument("two-qubit state must have unit norm");
  for (std::size_t k = 1; k < schedule.size(); ++k)
    if (!(schedule[k].time > schedule[k - 1].time))
      throw InvalidArgument("schedule times must be strictly increasing");
  TwoQubitState out = psi;
  for (const auto& step : schedule) {
    if (!is_unitary(step.unitary)) throw InvalidArgument("schedule entry is not unitary");
    out = apply_unitary(step.unitary, out);
  }
  return out;
}

/// Heisenberg-picture update V^dag X V.
inline Matrix4 heisenberg_conjugate(const Matrix4& v, const Matrix4& x) {
  return v.adjoint() * x * v;
}

/// Product of a schedule's unitaries, last impulse leftmost.
inline Matrix4 schedule_unitary(const std::vector<TimedUnitary>& schedule) {
  Matrix4 u = Matrix4::identity();
  for (const auto& step : schedule) u = step.unitary * u;
  return u;
}

/// gamma = ((0, CNOT_PC), (1, CNOT_CP)).
inline std::vector<TimedUnitary> transfer_schedule() {
  return {{0.0, cnot(Party::kPlant)}, {1.0, cnot(Party::kController)}};
}

inline const SingleQubitState kDown{Complex{0.0}, Complex{1.0}};
inline const SingleQubitState kUp{Complex{1.0}, Complex{0.0}};

struct TransferResult {
  bool passed = false;
  double fidelity = 0.0;  ///< <down| rho_P |down> after the schedule.
  Matrix2 plant_before;
  Matrix2 plant_after;
  Matrix2 controller_after;
};

/// Runs the transfer schedule from controller |down> and reports how well
/// the plant ends in its ground state.
inline TransferResult verify_transfer(const SingleQubitState& plant) {
  const double n = std::sqrt(std::norm(plant[0]) + std::norm(plant[1]));
  if (std::abs(n - 1.0) > kUnitNormTolerance) throw InvalidArgument("plant state must have unit norm");
  const TwoQubitState psi = product_state(plant, kDown);
  const TwoQubitState out = apply_direct_schedule(psi, transfer_schedule());
  TransferResult r;
  r.plant_before = reduced_state(psi, Party::kPlant);
  r.plant_after = reduced_state(out, Party::kPlant);
  r.controller_after = reduced_state(out, Party::kController);
  r.fidelity = r.plant_after(1, 1).real();
  r.passed = std::abs(r.fidelity - 1.0) <= kUnitNormTolerance;
  return r;
}

}  // namespace qcontrol
