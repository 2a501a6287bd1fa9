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

// Seeded Gaussian increments. Each (seed, stream) pair owns an independent
// engine, so path i is reproducible regardless of execution order.

#include <cmath>
#include <cstdint>
#include <random>

#include "qcontrol/error.hpp"

namespace qcontrol {

class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint64_t stream, double dt) : dt_(dt), sqrt_dt_(std::sqrt(dt)) {
    if (!(dt > 0.0)) throw InvalidArgument("noise step must be > 0");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Next Wiener increment, N(0, dt).
  double increment() { return sqrt_dt_ * normal_(engine_); }

  double dt() const { return dt_; }

 private:
  double dt_;
  double sqrt_dt_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace qcontrol
