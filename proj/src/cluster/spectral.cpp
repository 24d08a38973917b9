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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"
#include "stemml/core/random.hpp"
#include "stemml/linalg/sparse.hpp"

namespace stemml::cluster {

namespace {

double sq(const double* a, const double* b, std::size_t d) { return knn::squared_distance(a, b, d); }

// k-means++ seeding; zero-weight remainders fall back to the first unused point.
std::vector<double> seed_centers(PointsView data, std::size_t k, Rng& rng) {
  const std::size_t n = data.n, d = data.dim;
  std::vector<double> centers(k * d);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> used(n, 0);
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    used[pick] = 1;
    std::copy_n(data.row_ptr(pick), d, centers.begin() + c * d);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq(data.row_ptr(i), &centers[c * d], d));
      total += closest[i];
    }
    if (c + 1 == k) break;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        pick = i;
        u -= closest[i];
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<std::size_t>(std::find(used.begin(), used.end(), 0) - used.begin());
    }
  }
  return centers;
}

KMeansResult lloyd(PointsView data, std::size_t k, std::vector<double> centers, std::size_t max_iters, double tol) {
  const std::size_t n = data.n, d = data.dim;
  KMeansResult r;
  r.labels.assign(n, 0);
  double previous = std::numeric_limits<double>::infinity();
  std::vector<double> sums(k * d);
  std::vector<std::size_t> sizes(k);
  std::vector<double> point_cost(n);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = sq(data.row_ptr(i), &centers[c * d], d);
        if (dist < best) {
          best = dist;
          arg = static_cast<int>(c);
        }
      }
      r.labels[i] = arg;
      point_cost[i] = best;
      inertia += best;
    }
    r.inertia = inertia;
    if (previous - inertia <= tol * std::max(inertia, 1e-300) && iter > 0) break;
    previous = inertia;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.labels[i]);
      ++sizes[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += data.row_ptr(i)[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Empty cluster takes the point farthest from its center.
        const auto far = static_cast<std::size_t>(std::max_element(point_cost.begin(), point_cost.end()) - point_cost.begin());
        std::copy_n(data.row_ptr(far), d, centers.begin() + c * d);
        point_cost[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sums[c * d + j] / static_cast<double>(sizes[c]);
    }
  }
  r.centers = std::move(centers);
  return r;
}

}  // namespace

KMeansResult kmeans(PointsView data, std::size_t k, std::size_t restarts, std::size_t max_iters, double tol, std::uint64_t seed) {
  require(k >= 1 && k <= data.n, Errc::invalid_argument, fmt::format("k = {} must be in [1, n = {}]", k, data.n));
  require(restarts >= 1 && max_iters >= 1, Errc::invalid_argument, "k-means needs restarts >= 1 and max_iters >= 1");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, r));
    KMeansResult run = lloyd(data, k, seed_centers(data, k, rng), max_iters, tol);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

ClusterAssignment spectral_cluster(PointsView data, const SpectralParams& params, unsigned threads) {
  const std::size_t n = data.n, k = params.n_clusters;
  require(k >= 2 && k <= n, Errc::invalid_argument, fmt::format("n_clusters = {} must be in [2, n = {}]", k, n));
  require(params.n_neighbors >= 1, Errc::invalid_argument, "n_neighbors must be >= 1");
  const std::size_t nn = std::min(params.n_neighbors, n - 1);
  const knn::NeighborGraph g = knn::knn_brute(data, nn, threads);
  std::vector<linalg::Triplet> entries;
  entries.reserve(2 * n * nn);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j : g.neighbors(i)) {
      entries.push_back({static_cast<std::uint32_t>(i), j, 1.0});
      entries.push_back({j, static_cast<std::uint32_t>(i), 1.0});
    }
  linalg::CsrMatrix w = linalg::from_triplets(n, std::move(entries));
  for (double& v : w.val) v = 1.0;
  const linalg::Components comp = linalg::connected_components(w);
  require(comp.count <= k, Errc::validation,
          fmt::format("affinity graph has {} connected components, more than n_clusters = {}", comp.count, k));

  const linalg::EigenPairs eig = linalg::largest_eigenpairs(linalg::normalized_adjacency(w), k, derive_seed(params.seed, 1));
  std::vector<double> rows(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) norm += eig.vectors(i, c) * eig.vectors(i, c);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < k; ++c) rows[i * k + c] = norm > 0.0 ? eig.vectors(i, c) / norm : 0.0;
  }
  const KMeansResult km = kmeans(PointsView{rows.data(), n, k}, k, params.restarts, params.max_iters, params.tol,
                                 derive_seed(params.seed, 2));
  ClusterAssignment out;
  out.labels = km.labels;
  out.probabilities.assign(n, 1.0);
  std::vector<std::uint8_t> seen(k, 0);
  for (int l : out.labels) seen[static_cast<std::size_t>(l)] = 1;
  out.n_clusters = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  return out;
}

}  // namespace stemml::cluster
