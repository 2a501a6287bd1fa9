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

// Pulsed relaxation of a two-level atom: a pi/2 kick about x once per unit
// time drives the Bloch vector to a periodic steady state. Prints the
// post-pulse state for the first periods and the fixed point of the
// one-period map.

#include <cstdio>
#include <numbers>

#include "qcontrol/hybrid.hpp"

int main() {
  using namespace qcontrol;
  const SystemConfig cfg{0.0, 1.0, 0.0, 1e-3};
  const double period = 1.0, v = std::numbers::pi / 2;

  const auto schedule = ImpulseSchedule::periodic(period, v, period);
  const Trajectory traj =
      simulate_hybrid(cfg, schedule, constant_control(0.0), 8.0, Dynamics::kRelaxing, {0, 0, -1});
  std::printf("%6s %10s %10s %10s\n", "t", "x", "y", "z");
  for (std::size_t k : traj.events) {
    const BlochVector& r = traj.states[k];
    std::printf("%6.2f %10.6f %10.6f %10.6f\n", traj.times[k], r.x, r.y, r.z);
  }

  const BlochVector fixed = periodic_fixed_point_affine(cfg, period, v);
  std::printf("fixed point  (%.6f, %.6f, %.6f)\n", fixed.x, fixed.y, fixed.z);
  return 0;
}
