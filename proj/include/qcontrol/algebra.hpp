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

// Dense complex matrices of fixed small dimension, Pauli constants, Bloch
// coordinates and the measurement postulate for a two-level system.
//
// Basis convention: |up> = (1,0)^T is the +1 eigenvector of sigma_z (excited
// state), |down> = (0,1)^T is the ground state.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "qcontrol/error.hpp"

namespace qcontrol {

using Complex = std::complex<double>;

inline constexpr Complex kI{0.0, 1.0};

/// Dense N x N complex matrix, row-major, value semantics.
template <std::size_t N>
class SquareMatrix {
 public:
  static constexpr std::size_t dim = N;

  SquareMatrix() { entries_.fill(Complex{}); }

  SquareMatrix(std::initializer_list<std::initializer_list<Complex>> rows) {
    entries_.fill(Complex{});
    if (rows.size() != N) throw InvalidArgument("matrix literal has wrong row count");
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != N) throw InvalidArgument("matrix literal has wrong column count");
      std::size_t c = 0;
      for (const auto& v : row) (*this)(r, c++) = v;
      ++r;
    }
  }

  static SquareMatrix identity() {
    SquareMatrix m;
    for (std::size_t i = 0; i < N; ++i) m(i, i) = 1.0;
    return m;
  }

  static SquareMatrix diagonal(const std::array<Complex, N>& d) {
    SquareMatrix m;
    for (std::size_t i = 0; i < N; ++i) m(i, i) = d[i];
    return m;
  }

  Complex& operator()(std::size_t r, std::size_t c) { return entries_[r * N + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const { return entries_[r * N + c]; }

  SquareMatrix adjoint() const {
    SquareMatrix m;
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t c = 0; c < N; ++c) m(c, r) = std::conj((*this)(r, c));
    return m;
  }

  Complex trace() const {
    Complex t{};
    for (std::size_t i = 0; i < N; ++i) t += (*this)(i, i);
    return t;
  }

  /// Largest entry modulus.
  double max_abs() const {
    double m = 0.0;
    for (const auto& v : entries_) m = std::max(m, std::abs(v));
    return m;
  }

  SquareMatrix& operator+=(const SquareMatrix& o) {
    for (std::size_t i = 0; i < N * N; ++i) entries_[i] += o.entries_[i];
    return *this;
  }
  SquareMatrix& operator-=(const SquareMatrix& o) {
    for (std::size_t i = 0; i < N * N; ++i) entries_[i] -= o.entries_[i];
    return *this;
  }
  SquareMatrix& operator*=(Complex s) {
    for (auto& v : entries_) v *= s;
    return *this;
  }

  friend SquareMatrix operator+(SquareMatrix a, const SquareMatrix& b) { return a += b; }
  friend SquareMatrix operator-(SquareMatrix a, const SquareMatrix& b) { return a -= b; }
  friend SquareMatrix operator-(SquareMatrix a) { return a *= -1.0; }
  friend SquareMatrix operator*(SquareMatrix a, Complex s) { return a *= s; }
  friend SquareMatrix operator*(Complex s, SquareMatrix a) { return a *= s; }
  friend SquareMatrix operator*(SquareMatrix a, double s) { return a *= Complex{s, 0.0}; }
  friend SquareMatrix operator*(double s, SquareMatrix a) { return a *= Complex{s, 0.0}; }

  friend SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b) {
    SquareMatrix m;
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t k = 0; k < N; ++k) {
        const Complex ark = a(r, k);
        if (ark == Complex{}) continue;
        for (std::size_t c = 0; c < N; ++c) m(r, c) += ark * b(k, c);
      }
    return m;
  }

  friend bool operator==(const SquareMatrix& a, const SquareMatrix& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::array<Complex, N * N> entries_;
};

using Matrix2 = SquareMatrix<2>;
using Matrix4 = SquareMatrix<4>;

template <std::size_t N>
double max_abs_diff(const SquareMatrix<N>& a, const SquareMatrix<N>& b) {
  return (a - b).max_abs();
}

template <std::size_t N>
bool is_self_adjoint(const SquareMatrix<N>& a, double tol = 1e-10) {
  return max_abs_diff(a, a.adjoint()) <= tol;
}

template <std::size_t N>
SquareMatrix<N> commutator(const SquareMatrix<N>& a, const SquareMatrix<N>& b) {
  return a * b - b * a;
}

template <std::size_t N>
SquareMatrix<N> anticommutator(const SquareMatrix<N>& a, const SquareMatrix<N>& b) {
  return a * b + b * a;
}

/// Operator imaginary part Im[A] = (A - A^dagger) / (2i); self-adjoint.
template <std::size_t N>
SquareMatrix<N> operator_im(const SquareMatrix<N>& a) {
  return (a - a.adjoint()) * (1.0 / (2.0 * kI));
}

namespace pauli {

inline const Matrix2 kIdentity = Matrix2::identity();
inline const Matrix2 kX{{0.0, 1.0}, {1.0, 0.0}};
inline const Matrix2 kY{{0.0, -kI}, {kI, 0.0}};
inline const Matrix2 kZ{{1.0, 0.0}, {0.0, -1.0}};
/// Lowering operator |down><up|.
inline const Matrix2 kLower{{0.0, 0.0}, {1.0, 0.0}};
/// Raising operator |up><down|.
inline const Matrix2 kRaise{{0.0, 1.0}, {0.0, 0.0}};

}  // namespace pauli

/// Real 3-vector (x, y, z) of Pauli expectations.
struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double dot(const BlochVector& o) const { return x * o.x + y * o.y + z * o.z; }

  BlochVector& operator+=(const BlochVector& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  BlochVector& operator-=(const BlochVector& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  BlochVector& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  friend BlochVector operator+(BlochVector a, const BlochVector& b) { return a += b; }
  friend BlochVector operator-(BlochVector a, const BlochVector& b) { return a -= b; }
  friend BlochVector operator*(BlochVector a, double s) { return a *= s; }
  friend BlochVector operator*(double s, BlochVector a) { return a *= s; }
  friend bool operator==(const BlochVector&, const BlochVector&) = default;

  double max_abs_diff(const BlochVector& o) const {
    return std::max({std::abs(x - o.x), std::abs(y - o.y), std::abs(z - o.z)});
  }
};

inline constexpr double kBlochNormTolerance = 1e-9;
inline constexpr double kDensityTraceTolerance = 1e-12;
inline constexpr double kDensityEigenTolerance = 1e-12;
inline constexpr double kSelfAdjointTolerance = 1e-10;

/// Validated 2x2 density matrix: self-adjoint, unit trace, positive.
class DensityMatrix {
 public:
  /// Throws InvalidArgument if `m` is not a state.
  explicit DensityMatrix(const Matrix2& m) : m_(m) {
    if (!is_self_adjoint(m, kSelfAdjointTolerance))
      throw InvalidArgument("density matrix is not self-adjoint");
    if (std::abs(m.trace() - 1.0) > kDensityTraceTolerance)
      throw InvalidArgument("density matrix trace differs from 1");
    // For a 2x2 Hermitian matrix with unit trace the smallest eigenvalue is
    // 1/2 - |r|/2, so positivity is |r| <= 1.
    const double rx = 2.0 * m(0, 1).real();
    const double ry = -2.0 * m(0, 1).imag();
    const double rz = (m(0, 0) - m(1, 1)).real();
    if (0.5 - 0.5 * std::sqrt(rx * rx + ry * ry + rz * rz) < -kDensityEigenTolerance)
      throw InvalidArgument("density matrix has a negative eigenvalue");
  }

  const Matrix2& matrix() const { return m_; }

 private:
  Matrix2 m_;
};

/// rho = (I + x sx + y sy + z sz) / 2.
inline DensityMatrix density_from_bloch(const BlochVector& r) {
  if (r.norm() > 1.0 + kBlochNormTolerance)
    throw InvalidArgument("Bloch vector longer than 1 is not a state");
  // Rounding excursions up to the tolerance are pulled back onto the sphere.
  const double len = r.norm();
  const BlochVector s = len > 1.0 ? r * (1.0 / len) : r;
  const Matrix2 m{{0.5 * (1.0 + s.z), 0.5 * Complex{s.x, -s.y}},
                  {0.5 * Complex{s.x, s.y}, 0.5 * (1.0 - s.z)}};
  return DensityMatrix(m);
}

/// Components tr[rho sigma_a]. Validates the input as a state.
inline BlochVector bloch_from_density(const Matrix2& rho) {
  const DensityMatrix checked(rho);
  const Matrix2& m = checked.matrix();
  return {2.0 * m(0, 1).real(), -2.0 * m(0, 1).imag(), (m(0, 0) - m(1, 1)).real()};
}

inline BlochVector bloch_from_density(const DensityMatrix& rho) {
  return bloch_from_density(rho.matrix());
}

/// Eigenvalues with their spectral projectors; degenerate eigenvalues merged.
struct SpectralDecomposition {
  std::vector<double> eigenvalues;
  std::vector<Matrix2> projectors;
};

inline constexpr double kDegeneracyTolerance = 1e-9;

/// Closed-form decomposition A = a0 I + a.sigma = sum_k lambda_k P_k.
inline SpectralDecomposition spectral_decompose(const Matrix2& a) {
  if (!is_self_adjoint(a, kSelfAdjointTolerance))
    throw InvalidArgument("spectral_decompose requires a self-adjoint matrix");
  const double a0 = 0.5 * (a(0, 0) + a(1, 1)).real();
  const double ax = 0.5 * (a(0, 1) + a(1, 0)).real();
  const double ay = 0.5 * (a(1, 0) - a(0, 1)).imag();
  const double az = 0.5 * (a(0, 0) - a(1, 1)).real();
  const double len = std::sqrt(ax * ax + ay * ay + az * az);

  SpectralDecomposition out;
  if (2.0 * len < kDegeneracyTolerance) {
    out.eigenvalues = {a0};
    out.projectors = {Matrix2::identity()};
    return out;
  }
  const Matrix2 nsigma =
      (pauli::kX * ax + pauli::kY * ay + pauli::kZ * az) * (1.0 / len);
  out.eigenvalues = {a0 + len, a0 - len};
  out.projectors = {(Matrix2::identity() + nsigma) * 0.5,
                    (Matrix2::identity() - nsigma) * 0.5};
  return out;
}

struct Outcome {
  double value = 0.0;
  double probability = 0.0;
};

/// Born probabilities tr[rho P_a] for each distinct eigenvalue a of A.
inline std::vector<Outcome> measurement_probabilities(const DensityMatrix& rho,
                                                      const Matrix2& observable) {
  const auto spec = spectral_decompose(observable);
  std::vector<Outcome> out;
  out.reserve(spec.eigenvalues.size());
  for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k) {
    const double p = (rho.matrix() * spec.projectors[k]).trace().real();
    out.push_back({spec.eigenvalues[k], std::clamp(p, 0.0, 1.0)});
  }
  return out;
}

inline constexpr double kNullEventProbability = 1e-12;

/// Conditional state P_a rho P_a / tr[rho P_a] after observing `outcome`.
inline DensityMatrix project_postulate(const DensityMatrix& rho, const Matrix2& observable,
                                       double outcome) {
  const auto spec = spectral_decompose(observable);
  for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k) {
    if (std::abs(spec.eigenvalues[k] - outcome) > kDegeneracyTolerance) continue;
    const Matrix2& p = spec.projectors[k];
    const double prob = (rho.matrix() * p).trace().real();
    if (prob <= kNullEventProbability)
      throw NullEvent("cannot condition on an outcome of zero probability");
    Matrix2 post = p * rho.matrix() * p * (1.0 / prob);
    // Remove rounding asymmetry so the result validates as a state.
    post = (post + post.adjoint()) * 0.5;
    return DensityMatrix(post);
  }
  throw InvalidArgument("outcome " + std::to_string(outcome) +
                        " is not an eigenvalue of the observable");
}

/// Schrodinger-picture dissipator 1/2 [L, rho L^dag] + 1/2 [L rho, L^dag].
template <std::size_t N>
SquareMatrix<N> lindblad_dissipator(const SquareMatrix<N>& l, const SquareMatrix<N>& rho) {
  const SquareMatrix<N> ld = l.adjoint();
  return (commutator(l, rho * ld) + commutator(l * rho, ld)) * 0.5;
}

inline Matrix2 lindblad_dissipator(const Matrix2& l, const DensityMatrix& rho) {
  return lindblad_dissipator(l, rho.matrix());
}

/// Kronecker product; the first factor indexes the outer block.
template <std::size_t A, std::size_t B>
SquareMatrix<A * B> tensor(const SquareMatrix<A>& a, const SquareMatrix<B>& b) {
  SquareMatrix<A * B> m;
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < A; ++j)
      for (std::size_t k = 0; k < B; ++k)
        for (std::size_t l = 0; l < B; ++l) m(i * B + k, j * B + l) = a(i, j) * b(k, l);
  return m;
}

enum class Subsystem { kFirst, kSecond };

/// Traces out `traced` from a two-qubit operator.
inline Matrix2 partial_trace(const Matrix4& m, Subsystem traced) {
  Matrix2 out;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        if (traced == Subsystem::kSecond)
          out(i, j) += m(i * 2 + k, j * 2 + k);
        else
          out(i, j) += m(k * 2 + i, k * 2 + j);
      }
  return out;
}

}  // namespace qcontrol
