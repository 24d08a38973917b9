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
#include <limits>
#include <vector>

#include "stemml/core/points.hpp"
#include "stemml/knn/knn.hpp"

namespace stemml::cluster {

inline constexpr int kNoise = -1;
/// Lambda assigned to zero-distance merges, 1 / 1e-10.
inline constexpr double kLambdaCap = 1e10;

struct ClusterAssignment {
  std::vector<int> labels;            ///< -1 is noise
  std::vector<double> probabilities;  ///< 0 for noise
  std::size_t n_clusters = 0;
};

/// max(d, core_a, core_b); negative inputs are rejected.
double mutual_reachability(double d, double core_a, double core_b);

struct CoreDistances {
  std::size_t k_core = 0;
  std::vector<double> values;
};
/// Distance to the k_core-th nearest neighbor, self excluded.
CoreDistances core_distances(PointsView data, std::size_t k_core, unsigned threads = 1);
/// Reads rank k_core from a graph with k >= k_core.
CoreDistances core_distances(const knn::NeighborGraph& g, std::size_t k_core);
/// Exact graph up to 20,000 points, approximate (with a notice) above.
knn::NeighborGraph core_graph(PointsView data, std::size_t k, unsigned threads = 1);

struct MstEdge {
  std::uint32_t a, b;
  double weight;
};
/// Prim's algorithm on the complete mutual-reachability graph, O(n^2) time, O(n) memory.
std::vector<MstEdge> mst_mreach(PointsView data, const CoreDistances& cores);

/// Condensed tree rows: parent cluster id, child (point id < n, or cluster id
/// >= n), lambda at which the child leaves the parent, and child size.
struct CondensedTree {
  std::size_t n_points = 0;
  struct Row {
    std::uint32_t parent;
    std::uint32_t child;
    double lambda;
    std::size_t child_size;
  };
  std::vector<Row> rows;

  std::uint32_t root() const { return static_cast<std::uint32_t>(n_points); }
  std::size_t cluster_count() const;  ///< including the root
  bool is_cluster(std::uint32_t id) const { return id >= n_points; }
};

CondensedTree condense(std::vector<MstEdge> mst, std::size_t n_points, std::size_t min_cluster_size);

/// Excess-of-mass stability per cluster id (index id - n_points).
std::vector<double> cluster_stabilities(const CondensedTree& tree);
struct EomOptions {
  bool allow_single_cluster = false;
};
ClusterAssignment extract_eom(const CondensedTree& tree, const EomOptions& options = {});
/// Cluster ids (>= n_points) selected by extract_eom.
std::vector<std::uint32_t> selected_clusters(const CondensedTree& tree, const EomOptions& options = {});

/// k_core = 0 selects min_cluster_size.
ClusterAssignment hdbscan(PointsView data, std::size_t min_cluster_size, std::size_t k_core = 0, unsigned threads = 1);
/// Same, with cores read from a precomputed graph.
ClusterAssignment hdbscan(PointsView data, const knn::NeighborGraph& g, std::size_t min_cluster_size, std::size_t k_core = 0);

struct DecayFit {
  std::size_t k_min = 20, k_max = 149;
  std::vector<std::size_t> ks;
  std::vector<double> counts;
  double C = 0.0, tau = 0.0, b = 0.0;
  bool degenerate = false;  ///< tau unidentifiable; tau reported as 0
  std::size_t k_star = 20;
};
/// Fits counts(k) = C exp(-(k - k_min) / tau) + b over k = k_min.. with a tau
/// grid, linear least squares for (C, b), then Levenberg-Marquardt.
DecayFit fit_decay(std::size_t k_min, const std::vector<double>& counts);
/// Runs hdbscan for every k in [k_min, k_max] with min_cluster_size = k_core = k,
/// then fit_decay.
DecayFit select_k(PointsView data, std::size_t k_min = 20, std::size_t k_max = 149, unsigned threads = 1);

struct SpectralParams {
  std::size_t n_clusters = 7;
  std::size_t n_neighbors = 50;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t max_iters = 300;
  double tol = 1e-6;
};
ClusterAssignment spectral_cluster(PointsView data, const SpectralParams& params, unsigned threads = 1);

struct KMeansResult {
  std::vector<int> labels;
  std::vector<double> centers;  ///< k x dim
  double inertia = 0.0;
};
/// k-means++ seeding, best inertia over restarts.
KMeansResult kmeans(PointsView data, std::size_t k, std::size_t restarts, std::size_t max_iters, double tol, std::uint64_t seed);

/// Pair-counting adjusted Rand index. With exclude_noise, points labelled -1 in
/// either labeling are dropped first.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b, bool exclude_noise = false);

/// Renumbers labels >= 0 to 0..m-1 by first appearance; noise unchanged.
std::vector<int> canonical_labels(const std::vector<int>& labels);

}  // namespace stemml::cluster
