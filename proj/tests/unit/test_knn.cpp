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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stemml/core/error.hpp"
#include "stemml/knn/knn.hpp"

using namespace stemml;
using namespace stemml::knn;

namespace {

std::vector<double> random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n * dim);
  for (double& x : v) x = g(rng);
  return v;
}

// Independent reference: full sort of (distance, id) pairs using a naive sum.
std::vector<std::vector<std::pair<double, std::uint32_t>>> sort_reference(const std::vector<double>& v, std::size_t n,
                                                                           std::size_t dim, std::size_t k) {
  std::vector<std::vector<std::pair<double, std::uint32_t>>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::uint32_t>> row;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      long double s = 0;
      for (std::size_t t = 0; t < dim; ++t) {
        const long double d = v[i * dim + t] - v[j * dim + t];
        s += d * d;
      }
      row.emplace_back(static_cast<double>(std::sqrt(s)), static_cast<std::uint32_t>(j));
    }
    std::sort(row.begin(), row.end());
    row.resize(k);
    out[i] = row;
  }
  return out;
}

bool matches_reference(const NeighborGraph& g, const std::vector<double>& v, std::size_t dim) {
  const auto ref = sort_reference(v, g.n, dim, g.k);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.k; ++j) {
      if (g.neighbors(i)[j] != ref[i][j].second) return false;
      if (std::abs(g.dists(i)[j] - ref[i][j].first) > 1e-12 * (1.0 + ref[i][j].first)) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("points on a line") {
  const std::vector<double> v{0.0, 1.0, 3.0};
  const PointsView view{v.data(), 3, 1};
  const NeighborGraph g1 = knn_brute(view, 1);
  CHECK(std::vector<std::uint32_t>(g1.indices) == std::vector<std::uint32_t>{1, 0, 1});
  CHECK(g1.distances == std::vector<double>{1.0, 1.0, 2.0});
  const NeighborGraph g2 = knn_brute(view, 2);
  CHECK(g2.neighbors(0)[0] == 1);
  CHECK(g2.neighbors(0)[1] == 2);
  CHECK(g2.dists(0)[1] == 3.0);
  CHECK_THROWS_AS(knn_brute(view, 3), Error);
}

TEST_CASE("equal distances break toward the lower id, duplicates are legal") {
  const std::vector<double> v{0.0, -1.0, 1.0, 0.0};
  const NeighborGraph g = knn_brute({v.data(), 4, 1}, 3);
  CHECK(g.neighbors(0)[0] == 3);
  CHECK(g.dists(0)[0] == 0.0);
  CHECK(g.neighbors(0)[1] == 1);
  CHECK(g.neighbors(0)[2] == 2);
  g.validate();
}

TEST_CASE("knn_brute matches the sort reference on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = random_points(120, 16, seed);
    CHECK(matches_reference(knn_brute({v.data(), 120, 16}, 10), v, 16));
  }
}

TEST_CASE("the blocked product path agrees with the reference") {
  const std::size_t n = 300, dim = 96;
  auto v = random_points(n, dim, 5);
  // Shared large offset stresses cancellation in the norm expansion.
  for (double& x : v) x += 50.0;
  const NeighborGraph g = knn_brute({v.data(), n, dim}, 12, 2);
  CHECK(matches_reference(g, v, dim));
}

TEST_CASE("knn_brute is consistent under point permutation") {
  const std::size_t n = 80, dim = 5;
  const auto v = random_points(n, dim, 9);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  std::vector<double> w(n * dim);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(v.begin() + perm[i] * dim, dim, w.begin() + i * dim);
  const NeighborGraph a = knn_brute({v.data(), n, dim}, 6), b = knn_brute({w.data(), n, dim}, 6);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(perm[b.neighbors(i)[j]] == a.neighbors(perm[i])[j]);
      CHECK(b.dists(i)[j] == a.dists(perm[i])[j]);
    }
}

TEST_CASE("rp_forest trivial cases") {
  const auto v = random_points(3, 4, 1);
  const PointsView view{v.data(), 3, 4};
  const CandidateLists none = rp_forest(view, {0, 30, 1});
  for (const auto& c : none) CHECK(c.empty());
  const CandidateLists one = rp_forest(view, {4, 3, 1});
  CHECK(one[0] == std::vector<std::uint32_t>{1, 2});
  CHECK(one[1] == std::vector<std::uint32_t>{0, 2});
  CHECK(one[2] == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("rp_forest keeps well separated blobs apart") {
  const std::size_t dim = 8;
  auto v = random_points(100, dim, 4);
  for (std::size_t i = 50; i < 100; ++i) v[i * dim] += 100.0;
  const CandidateLists cand = rp_forest({v.data(), 100, dim}, {8, 30, 7});
  std::size_t pure = 0;
  for (std::size_t i = 0; i < 100; ++i)
    pure += std::all_of(cand[i].begin(), cand[i].end(), [&](std::uint32_t j) { return (j < 50) == (i < 50); });
  CHECK(pure >= 95);
}

TEST_CASE("nn_descent reaches high recall on 2000 points in 32 dimensions") {
  const std::size_t n = 2000, dim = 32, k = 50;
  const auto v = random_points(n, dim, 21);
  const PointsView view{v.data(), n, dim};
  const NeighborGraph exact = knn_brute(view, k);
  const CandidateLists cand = rp_forest(view, {8, default_leaf_size(k), 3});
  const NeighborGraph approx = nn_descent(view, k, cand, {});
  approx.validate();
  CHECK(knn_recall(approx, exact) >= 0.95);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) REQUIRE(approx.dists(i)[j] >= exact.dists(i)[j] - 1e-12);
}

TEST_CASE("exact initialization is a fixed point") {
  const std::size_t n = 200, dim = 6, k = 8;
  const auto v = random_points(n, dim, 2);
  const PointsView view{v.data(), n, dim};
  const NeighborGraph exact = knn_brute(view, k);
  CandidateLists init(n);
  for (std::size_t i = 0; i < n; ++i) init[i].assign(exact.neighbors(i).begin(), exact.neighbors(i).end());
  DescentStats stats;
  const NeighborGraph g = nn_descent(view, k, init, {}, &stats);
  REQUIRE(stats.updates.size() == 1);
  CHECK(stats.updates[0] == 0);
  CHECK(stats.converged);
  CHECK(g.indices == exact.indices);
}

TEST_CASE("nn_descent from random init solves tiny problems exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto v = random_points(5, 3, seed);
    const PointsView view{v.data(), 5, 3};
    DescentParams p;
    p.seed = seed;
    const NeighborGraph g = nn_descent(view, 2, {}, p);
    CHECK(g.indices == knn_brute(view, 2).indices);
  }
}

TEST_CASE("nn_descent is deterministic across thread counts") {
  const std::size_t n = 600, dim = 10, k = 10;
  const auto v = random_points(n, dim, 8);
  const PointsView view{v.data(), n, dim};
  const CandidateLists cand = rp_forest(view, {4, 30, 1}, 2);
  CHECK(cand == rp_forest(view, {4, 30, 1}, 1));
  CHECK(nn_descent(view, k, cand, {}, nullptr, 1).indices == nn_descent(view, k, cand, {}, nullptr, 3).indices);
}

TEST_CASE("knn_recall") {
  NeighborGraph a(2, 2), b(2, 2), c(2, 2);
  a.indices = {1, 2, 0, 2};
  b.indices = {3, 4, 3, 4};
  c.indices = {2, 3, 2, 3};
  CHECK(knn_recall(a, a) == 1.0);
  CHECK(knn_recall(a, b) == 0.0);
  CHECK(knn_recall(a, c) == 0.5);
  CHECK_THROWS_AS(knn_recall(a, NeighborGraph(2, 1)), Error);
}

TEST_CASE("default sizes") {
  CHECK(default_n_trees(2000) == 14);
  CHECK(default_n_trees(1u << 30) == 32);
  CHECK(default_leaf_size(10) == 30);
  CHECK(default_leaf_size(50) == 51);
}
