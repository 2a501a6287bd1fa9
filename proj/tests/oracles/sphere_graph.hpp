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

// Shortest-time graph oracle for the closed atom on the sphere.
//
// Nodes are the polar grid points. With u held constant the closed dynamics
// r' = (u, 0, w) x r are a rigid rotation, so the fastest way from node p
// to node q that switches control at most once (u1 then u2, both in
// {-1, 0, 1}) is found in closed form: the switch point lies on the circle
// swept from p about axis 1 and on the circle swept back from q about axis
// 2. Edge weights are these exact transit times; Dijkstra runs backward
// from the target node set over the complete graph.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qcontrol/hjb_sphere.hpp"

namespace oracle {

using qcontrol::BlochVector;

inline BlochVector cross(const BlochVector& a, const BlochVector& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Counter-clockwise rotation angle about unit axis n taking a to b, in [0, 2pi).
inline double rotation_angle(const BlochVector& a, const BlochVector& b, const BlochVector& n) {
  const BlochVector ap = a - n * a.dot(n);
  const BlochVector bp = b - n * b.dot(n);
  double t = std::atan2(n.dot(cross(ap, bp)), ap.dot(bp));
  if (t < 0.0) t += 2.0 * std::numbers::pi;
  return t;
}

struct Axis {
  BlochVector n;  // unit rotation axis
  double rate = 0.0;
};

inline double two_arc_time(const BlochVector& p, const BlochVector& q, const Axis& a1,
                           const Axis& a2) {
  const double c1 = p.dot(a1.n);
  const double c2 = q.dot(a2.n);
  const double g = a1.n.dot(a2.n);
  const double den = 1.0 - g * g;
  if (den < 1e-14) return std::numeric_limits<double>::infinity();
  const BlochVector base = a1.n * ((c1 - g * c2) / den) + a2.n * ((c2 - g * c1) / den);
  const double rem = 1.0 - base.dot(base);
  if (rem < -1e-12) return std::numeric_limits<double>::infinity();
  const double h = std::sqrt(std::max(rem, 0.0));
  const BlochVector k = cross(a1.n, a2.n) * (1.0 / std::sqrt(den));
  double best = std::numeric_limits<double>::infinity();
  for (double s : {-1.0, 1.0}) {
    const BlochVector m = base + k * (s * h);
    best = std::min(best, rotation_angle(p, m, a1.n) / a1.rate + rotation_angle(m, q, a2.n) / a2.rate);
  }
  return best;
}

inline std::vector<double> shortest_times(const qcontrol::PolarGrid& g, double omega,
                                          const std::vector<unsigned char>& target) {
  std::array<Axis, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const double u = a - 1.0;
    const double len = std::hypot(u, omega);
    axes[a] = {{u / len, 0.0, omega / len}, len};
  }
  const std::size_t n = g.size();
  std::vector<BlochVector> pts(n);
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) pts[g.index(i, j)] = g.point(i, j);

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> done(n, 0);
  for (std::size_t k = 0; k < n; ++k)
    if (target[k]) dist[k] = 0.0;
  // Dense graph: an O(n^2) selection beats a heap here.
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t q = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (!done[k] && dist[k] < best) {
        best = dist[k];
        q = k;
      }
    if (q == n) break;
    done[q] = 1;
    for (std::size_t p = 0; p < n; ++p) {
      if (done[p]) continue;
      double edge = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (a != b) edge = std::min(edge, two_arc_time(pts[p], pts[q], axes[a], axes[b]));
      dist[p] = std::min(dist[p], best + edge);
    }
  }
  return dist;
}

}  // namespace oracle
