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

// Network parameters G = (L, H) for open systems with identity scattering,
// and the concatenation and series products that compose them.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"

namespace qcontrol {

template <std::size_t N>
struct SLHParams {
  /// Coupling operators L_1..L_n, one per field channel.
  std::vector<SquareMatrix<N>> couplings;
  SquareMatrix<N> hamiltonian;

  std::size_t channels() const { return couplings.size(); }
};

using SLH2 = SLHParams<2>;

template <std::size_t N>
void validate(const SLHParams<N>& g) {
  if (!is_self_adjoint(g.hamiltonian, kSelfAdjointTolerance))
    throw InvalidArgument("SLH hamiltonian is not self-adjoint");
}

template <std::size_t N>
SLHParams<N> make_slh(std::vector<SquareMatrix<N>> couplings, SquareMatrix<N> hamiltonian) {
  SLHParams<N> g{std::move(couplings), std::move(hamiltonian)};
  validate(g);
  return g;
}

/// G1 [+] G2: stack the coupling vectors, add the Hamiltonians.
template <std::size_t N>
SLHParams<N> concat(const SLHParams<N>& g1, const SLHParams<N>& g2) {
  SLHParams<N> out;
  out.couplings = g1.couplings;
  out.couplings.insert(out.couplings.end(), g2.couplings.begin(), g2.couplings.end());
  out.hamiltonian = g1.hamiltonian + g2.hamiltonian;
  return out;
}

/// G2 <| G1: the output of G1 feeds the input of G2.
///   L = L1 + L2,  H = H1 + H2 + Im[L2^dag L1].
/// Only single-channel factors are accepted; route multi-channel systems
/// through concat() first.
template <std::size_t N>
SLHParams<N> series(const SLHParams<N>& g2, const SLHParams<N>& g1) {
  if (g1.channels() != 1 || g2.channels() != 1)
    throw InvalidArgument("series product requires single-channel factors (got " +
                          std::to_string(g2.channels()) + " and " +
                          std::to_string(g1.channels()) + " channels)");
  const auto& l1 = g1.couplings.front();
  const auto& l2 = g2.couplings.front();
  SLHParams<N> out;
  out.couplings = {l1 + l2};
  out.hamiltonian = g1.hamiltonian + g2.hamiltonian + operator_im(SquareMatrix<N>(l2.adjoint() * l1));
  return out;
}

/// Master-equation right-hand side i[rho, H] + sum_j D[L_j](rho).
template <std::size_t N>
SquareMatrix<N> master_rhs(const SLHParams<N>& g, const SquareMatrix<N>& rho) {
  SquareMatrix<N> out = commutator(rho, g.hamiltonian) * kI;
  for (const auto& l : g.couplings) out += lindblad_dissipator(l, rho);
  return out;
}

inline Matrix2 master_rhs(const SLH2& g, const DensityMatrix& rho) {
  return master_rhs(g, rho.matrix());
}

/// Control Hamiltonian H(u) = (omega sz + u sx) / 2.
inline Matrix2 control_hamiltonian(double omega, double u) {
  return (pauli::kZ * omega + pauli::kX * u) * 0.5;
}

/// Driven two-channel atom (sqrt(k1) s-, H(u)) [+] (sqrt(k2) s-, 0).
inline SLH2 atom_params(double kappa1, double kappa2, double omega, double u) {
  if (!(kappa1 >= 0.0) || !(kappa2 >= 0.0))
    throw InvalidArgument("coupling rates must be non-negative");
  const SLH2 first{{pauli::kLower * std::sqrt(kappa1)}, control_hamiltonian(omega, u)};
  const SLH2 second{{pauli::kLower * std::sqrt(kappa2)}, Matrix2{}};
  return concat(first, second);
}

}  // namespace qcontrol
