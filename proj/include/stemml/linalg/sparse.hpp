// Copyright 2026 The stemml Authors
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

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace stemml::linalg {

/// Square compressed-sparse-row matrix with sorted column ids per row.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
  double degree(std::size_t i) const;
  void multiply(const double* x, double* y) const;
  bool is_symmetric() const;
  Eigen::MatrixXd to_dense() const;
};

struct Triplet {
  std::uint32_t i, j;
  double w;
};
/// Duplicate (i, j) entries are summed.
CsrMatrix from_triplets(std::size_t n, std::vector<Triplet> entries);

struct Components {
  std::size_t count = 0;
  std::vector<std::uint32_t> label;  ///< component id per vertex, numbered by first appearance
};
Components connected_components(const CsrMatrix& adjacency);

/// D^{-1/2} W D^{-1/2}; isolated vertices get zero rows.
CsrMatrix normalized_adjacency(const CsrMatrix& w);

struct EigenPairs {
  Eigen::VectorXd values;   ///< descending
  Eigen::MatrixXd vectors;  ///< n x nev, orthonormal columns
  bool converged = true;
};

/// nev algebraically largest eigenpairs of a symmetric matrix. Uses a dense
/// solver for small n and block Krylov with full reorthogonalization otherwise;
/// repeated eigenvalues up to the block size are resolved.
EigenPairs largest_eigenpairs(const CsrMatrix& m, std::size_t nev, std::uint64_t seed, double tol = 1e-8);

}  // namespace stemml::linalg
