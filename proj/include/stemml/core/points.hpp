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

#include <cstddef>
#include <span>
#include <vector>

#include "stemml/core/error.hpp"

namespace stemml {

/// Non-owning row-major view of n points in dim dimensions.
struct PointsView {
  const double* data = nullptr;
  std::size_t n = 0;
  std::size_t dim = 0;

  std::span<const double> row(std::size_t i) const { return {data + i * dim, dim}; }
  const double* row_ptr(std::size_t i) const { return data + i * dim; }
};

/// n points in d dimensions, row-major. Produced by the embedding stage and
/// consumed by clustering and the explorer.
struct Embedding {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> coords;

  Embedding() = default;
  Embedding(std::size_t n_points, std::size_t dims) : n(n_points), d(dims), coords(n_points * dims, 0.0) {}
  Embedding(std::size_t n_points, std::size_t dims, std::vector<double> values)
      : n(n_points), d(dims), coords(std::move(values)) {
    require(coords.size() == n * d, Errc::shape, "embedding coordinate count does not match n*d");
  }

  double& at(std::size_t i, std::size_t k) { return coords[i * d + k]; }
  double at(std::size_t i, std::size_t k) const { return coords[i * d + k]; }
  std::span<const double> row(std::size_t i) const { return {coords.data() + i * d, d}; }
  PointsView view() const { return {coords.data(), n, d}; }
  bool all_finite() const;
};

}  // namespace stemml
