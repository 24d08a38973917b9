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
#include <filesystem>
#include <span>
#include <vector>

#include "stemml/core/points.hpp"

namespace stemml::knn {

/// n x k neighbor ids and Euclidean distances, rows sorted by (distance, id),
/// never containing the row's own id.
struct NeighborGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> distances;

  NeighborGraph() = default;
  NeighborGraph(std::size_t n_points, std::size_t k_neighbors)
      : n(n_points), k(k_neighbors), indices(n_points * k_neighbors), distances(n_points * k_neighbors) {}

  std::span<const std::uint32_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
  std::span<const double> dists(std::size_t i) const { return {distances.data() + i * k, k}; }
  /// First k_new columns of every row.
  NeighborGraph prefix(std::size_t k_new) const;
  /// Throws Errc::validation on the first violated invariant.
  void validate() const;
};

using CandidateLists = std::vector<std::vector<std::uint32_t>>;

/// Squared Euclidean distance with a fixed summation order.
double squared_distance(const double* a, const double* b, std::size_t dim);

/// Exact kNN; equal distances are ordered by lower id.
NeighborGraph knn_brute(PointsView data, std::size_t k, unsigned threads = 1);

struct ForestParams {
  std::size_t n_trees = 8;
  std::size_t leaf_size = 30;
  std::uint64_t seed = 0;
};
/// Per-point union of co-leaf members over all trees, sorted, without self.
CandidateLists rp_forest(PointsView data, const ForestParams& params, unsigned threads = 1);

struct DescentParams {
  std::size_t max_iters = 10;
  double sample_rate = 1.0;
  double delta = 0.001;
  std::uint64_t seed = 0;
};
struct DescentStats {
  std::vector<std::size_t> updates;  ///< accepted insertions per iteration
  bool converged = false;
};
NeighborGraph nn_descent(PointsView data, std::size_t k, const CandidateLists& init, const DescentParams& params,
                         DescentStats* stats = nullptr, unsigned threads = 1);

std::size_t default_n_trees(std::size_t n);
std::size_t default_leaf_size(std::size_t k);

/// rp_forest with default sizes followed by nn_descent.
NeighborGraph knn_approximate(PointsView data, std::size_t k, std::uint64_t seed, unsigned threads = 1);

/// Mean over rows of |approx_i intersect exact_i| / k.
double knn_recall(const NeighborGraph& approx, const NeighborGraph& exact);

/// Stored as <stem>_indices.npy (u32) and <stem>_distances.npy (f8).
void save_graph(const std::filesystem::path& stem, const NeighborGraph& g);
NeighborGraph load_graph(const std::filesystem::path& stem);

}  // namespace stemml::knn
