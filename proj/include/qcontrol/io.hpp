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

// JSON encodings shared by the command-line tool: complex matrices as an
// array of rows with [re, im] entries, and SLH parameter sets as
// {"couplings": [...], "hamiltonian": ...}.

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "qcontrol/algebra.hpp"
#include "qcontrol/error.hpp"
#include "qcontrol/slh.hpp"

namespace qcontrol::io {

using Json = nlohmann::json;

template <std::size_t N>
Json to_json(const SquareMatrix<N>& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < N; ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < N; ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Parses a matrix; `field` names the location for error messages.
template <std::size_t N>
SquareMatrix<N> matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != N)
    throw InvalidArgument(field + ": expected " + std::to_string(N) + " rows");
  SquareMatrix<N> m;
  for (std::size_t r = 0; r < N; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != N)
      throw InvalidArgument(field + ": row " + std::to_string(r) + " needs " + std::to_string(N) +
                            " entries");
    for (std::size_t c = 0; c < N; ++c) {
      const Json& e = row[c];
      const std::string where = field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]";
      // A bare number is accepted as a real entry.
      if (e.is_number()) {
        m(r, c) = e.get<double>();
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
        m(r, c) = Complex{e[0].get<double>(), e[1].get<double>()};
      } else {
        throw InvalidArgument(where + ": expected [re, im]");
      }
    }
  }
  return m;
}

template <std::size_t N>
Json to_json(const SLHParams<N>& g) {
  Json couplings = Json::array();
  for (const auto& l : g.couplings) couplings.push_back(to_json(l));
  return {{"couplings", std::move(couplings)}, {"hamiltonian", to_json(g.hamiltonian)}};
}

template <std::size_t N>
SLHParams<N> slh_from_json(const Json& j, const std::string& field) {
  if (!j.is_object()) throw InvalidArgument(field + ": expected an object");
  if (!j.contains("couplings") || !j["couplings"].is_array())
    throw InvalidArgument(field + ".couplings: expected an array of matrices");
  if (!j.contains("hamiltonian")) throw InvalidArgument(field + ".hamiltonian: missing");
  std::vector<SquareMatrix<N>> ls;
  for (std::size_t k = 0; k < j["couplings"].size(); ++k)
    ls.push_back(matrix_from_json<N>(j["couplings"][k],
                                     field + ".couplings[" + std::to_string(k) + "]"));
  const auto h = matrix_from_json<N>(j["hamiltonian"], field + ".hamiltonian");
  if (!is_self_adjoint(h, kSelfAdjointTolerance))
    throw InvalidArgument(field + ".hamiltonian: not self-adjoint");
  return {std::move(ls), h};
}

}  // namespace qcontrol::io
