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

#include <cmath>
#include <random>

#include "qcontrol/algebra.hpp"

namespace testing_support {

using qcontrol::BlochVector;
using qcontrol::Complex;
using qcontrol::Matrix2;

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20260417);
  return gen;
}

inline double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

/// Uniform point in the closed unit ball.
inline BlochVector random_bloch() {
  for (;;) {
    const BlochVector r{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
    if (r.norm() <= 1.0) return r;
  }
}

/// Uniform point on the unit sphere.
inline BlochVector random_pure() {
  for (;;) {
    const BlochVector r{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
    const double n = r.norm();
    if (n > 1e-3 && n <= 1.0) return r * (1.0 / n);
  }
}

inline Matrix2 random_matrix() {
  Matrix2 m;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) m(r, c) = Complex{uniform(-1, 1), uniform(-1, 1)};
  return m;
}

inline Matrix2 random_hermitian() {
  const Matrix2 m = random_matrix();
  return (m + m.adjoint()) * 0.5;
}

}  // namespace testing_support
