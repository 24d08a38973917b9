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

#include <functional>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "stemml/core/error.hpp"
#include "stemml/cluster/cluster.hpp"

using namespace stemml;
using namespace stemml::cluster;

namespace {

struct Points {
  std::vector<double> x;
  std::size_t dim = 2;
  PointsView view() const { return {x.data(), x.size() / dim, dim}; }
};

Points line(std::initializer_list<double> v) {
  Points p;
  p.dim = 1;
  p.x.assign(v);
  return p;
}

void add_blob(Points& p, std::mt19937_64& rng, double cx, double cy, double sigma, std::size_t m) {
  std::normal_distribution<double> g(0.0, sigma);
  for (std::size_t i = 0; i < m; ++i) {
    p.x.push_back(cx + g(rng));
    p.x.push_back(cy + g(rng));
  }
}

Points uniform(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points p;
  for (std::size_t i = 0; i < 2 * n; ++i) p.x.push_back(u(rng));
  return p;
}

// Kruskal on the explicit complete mutual-reachability graph.
std::vector<double> kruskal_weights(PointsView v, const CoreDistances& c) {
  struct E {
    double w;
    std::uint32_t a, b;
  };
  std::vector<E> all;
  for (std::uint32_t a = 0; a < v.n; ++a)
    for (std::uint32_t b = a + 1; b < v.n; ++b)
      all.push_back({mutual_reachability(std::sqrt(knn::squared_distance(v.row_ptr(a), v.row_ptr(b), v.dim)),
                                         c.values[a], c.values[b]),
                     a, b});
  std::sort(all.begin(), all.end(), [](const E& x, const E& y) { return x.w < y.w; });
  std::vector<std::uint32_t> parent(v.n);
  std::iota(parent.begin(), parent.end(), 0u);
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  std::vector<double> used;
  for (const E& e : all) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    used.push_back(e.w);
  }
  return used;
}

std::vector<double> sorted_weights(const std::vector<MstEdge>& mst) {
  std::vector<double> w;
  for (const auto& e : mst) w.push_back(e.weight);
  std::sort(w.begin(), w.end());
  return w;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) { return adjusted_rand_index(a, b) == 1.0; }

}  // namespace

TEST_CASE("mutual reachability is the max of its inputs") {
  CHECK(mutual_reachability(1, 2, 3) == 3);
  CHECK(mutual_reachability(5, 0, 0) == 5);
  CHECK(mutual_reachability(10, 2, 3) == 10);
  CHECK_THROWS_AS(mutual_reachability(-1, 0, 0), Error);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    const double d = u(rng), a = u(rng), b = u(rng), e = u(rng);
    CHECK(mutual_reachability(d, a, b) == std::max({d, a, b}));
    CHECK(mutual_reachability(d, a, b) == mutual_reachability(d, b, a));
    CHECK(mutual_reachability(d + e, a, b) >= mutual_reachability(d, a, b));
    CHECK(mutual_reachability(d, a + e, b) >= mutual_reachability(d, a, b));
  }
}

TEST_CASE("core distances on a line") {
  const Points p = line({0, 1, 3});
  CHECK(core_distances(p.view(), 1).values == std::vector<double>{1, 1, 2});
  CHECK(core_distances(p.view(), 2).values == std::vector<double>{3, 2, 3});
  CHECK_THROWS_AS(core_distances(p.view(), 3), Error);
  CHECK_THROWS_AS(core_distances(p.view(), 0), Error);
  const Points dup = line({2, 2, 7});
  const auto c = core_distances(dup.view(), 1).values;
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
}

TEST_CASE("core distances grow with k_core") {
  const Points p = uniform(120, 9);
  const auto g = core_graph(p.view(), 10);
  for (std::size_t k = 1; k < 10; ++k) {
    const auto lo = core_distances(g, k).values, hi = core_distances(g, k + 1).values;
    for (std::size_t i = 0; i < lo.size(); ++i) CHECK(hi[i] >= lo[i]);
  }
  CHECK(core_distances(p.view(), 7).values == core_distances(g, 7).values);
}

TEST_CASE("mst on a triangle and with duplicates") {
  // Sides 1, 2 and 3 fold to a degenerate triangle on a line.
  const Points p = line({0, 1, 3});
  const CoreDistances zero{1, {0, 0, 0}};
  const auto mst = mst_mreach(p.view(), zero);
  REQUIRE(mst.size() == 2);
  CHECK(sorted_weights(mst) == std::vector<double>{1, 2});

  const Points dup = line({4, 4, 9});
  const auto cores = core_distances(dup.view(), 1);
  const auto w = sorted_weights(mst_mreach(dup.view(), cores));
  CHECK(w.front() == 0.0);
}

TEST_CASE("mst weights equal a Kruskal oracle") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 20 + 40 * seed;
    Points p;
    p.dim = 3;
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < n * 3; ++i) p.x.push_back(std::round(g(rng) * 4.0) / 4.0);  // many ties
    const auto cores = core_distances(p.view(), 1 + seed % 5);
    const auto mst = mst_mreach(p.view(), cores);
    CHECK(mst.size() == n - 1);
    CHECK(sorted_weights(mst) == kruskal_weights(p.view(), cores));
  }
}

TEST_CASE("two blobs and an outlier on a line") {
  const Points p = line({0, 0.1, 0.2, 10, 10.1, 10.2, 50});
  const auto cores = core_distances(p.view(), 2);
  const std::vector<double> expected{0.2, 0.1, 0.2, 0.2, 0.1, 0.2, 39.9};
  for (std::size_t i = 0; i < 7; ++i) CHECK(cores.values[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  const CondensedTree tree = condense(mst_mreach(p.view(), cores), 7, 3);
  std::size_t leaves = 0;
  std::set<std::uint32_t> parents;
  for (const auto& r : tree.rows)
    if (!tree.is_cluster(r.child)) parents.insert(r.parent);
  for (const auto& r : tree.rows)
    if (tree.is_cluster(r.child)) {
      CHECK(r.child_size == 3);
      leaves += parents.count(r.child);
    }
  CHECK(leaves == 2);
  // Point 50 leaves the root at lambda 1/39.9.
  bool outlier_from_root = false;
  for (const auto& r : tree.rows)
    if (r.child == 6) outlier_from_root = r.parent == tree.root() && r.lambda == doctest::Approx(1.0 / 39.9);
  CHECK(outlier_from_root);

  const ClusterAssignment a = extract_eom(tree);
  CHECK(a.n_clusters == 2);
  CHECK(canonical_labels(a.labels) == std::vector<int>{0, 0, 0, 1, 1, 1, -1});
  CHECK(a.probabilities[6] == 0.0);
  for (std::size_t i = 0; i < 6; ++i) CHECK((a.probabilities[i] > 0.0 && a.probabilities[i] <= 1.0));

  const ClusterAssignment h = hdbscan(p.view(), 3, 2);
  CHECK(h.labels == a.labels);
}

TEST_CASE("degenerate trees") {
  Points same;
  same.dim = 2;
  same.x.assign(20, 1.5);
  const auto tree = condense(mst_mreach(same.view(), core_distances(same.view(), 3)), 10, 3);
  CHECK(tree.cluster_count() == 1);
  for (const auto& r : tree.rows) {
    CHECK(r.parent == tree.root());
    CHECK(r.lambda == kLambdaCap);
  }
  CHECK(cluster_stabilities(tree)[0] == doctest::Approx(10 * kLambdaCap));

  const Points p = line({0, 1, 2, 3});
  const auto small = condense(mst_mreach(p.view(), core_distances(p.view(), 1)), 4, 5);
  CHECK(small.cluster_count() == 1);
  CHECK(small.rows.size() == 4);
  const auto a = extract_eom(small);
  CHECK(a.n_clusters == 0);
  CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == kNoise; }));
  CHECK_THROWS_AS(condense({}, 1, 1), Error);
}

TEST_CASE("condensed tree invariants") {
  std::mt19937_64 rng(21);
  Points p;
  add_blob(p, rng, 0, 0, 1, 80);
  add_blob(p, rng, 8, 0, 0.5, 60);
  add_blob(p, rng, 0, 9, 1.5, 70);
  const std::size_t mcs = 10;
  const auto tree = condense(mst_mreach(p.view(), core_distances(p.view(), mcs)), p.view().n, mcs);
  std::vector<double> birth(tree.cluster_count(), 0.0);
  std::size_t point_rows = 0;
  for (const auto& r : tree.rows) {
    CHECK(tree.is_cluster(r.parent));
    if (tree.is_cluster(r.child)) {
      CHECK(r.child_size >= mcs);
      CHECK(r.child > r.parent);
      birth[r.child - tree.root()] = r.lambda;
    } else {
      CHECK(r.child_size == 1);
      ++point_rows;
    }
  }
  CHECK(point_rows == p.view().n);
  // Lambda never decreases from a cluster's birth to its rows.
  for (const auto& r : tree.rows) CHECK(r.lambda >= birth[r.parent - tree.root()]);
}

TEST_CASE("a dominant parent replaces its children") {
  std::mt19937_64 rng(0);
  Points p;
  add_blob(p, rng, 0, 0, 0.2, 20);
  add_blob(p, rng, 1, 0, 0.2, 20);
  add_blob(p, rng, 100, 0, 0.2, 20);
  add_blob(p, rng, 101, 0, 0.2, 20);
  const std::size_t mcs = 8;
  const auto tree = condense(mst_mreach(p.view(), core_distances(p.view(), mcs)), p.view().n, mcs);
  const auto stab = cluster_stabilities(tree);
  const auto chosen = selected_clusters(tree);
  std::vector<std::vector<std::uint32_t>> kids(tree.cluster_count());
  for (const auto& r : tree.rows)
    if (tree.is_cluster(r.child)) kids[r.parent - tree.root()].push_back(r.child - tree.root());

  // At least one selected cluster must beat its own children for this instance to be meaningful.
  bool exercised = false;
  for (std::uint32_t c : chosen) {
    const auto& k = kids[c - tree.root()];
    if (k.empty()) continue;
    double sum = 0.0;
    for (auto x : k) sum += stab[x];
    CHECK(stab[c - tree.root()] >= sum);
    exercised = true;
  }
  CHECK(exercised);
  const auto a = extract_eom(tree);
  CHECK(a.n_clusters == 2);
  std::vector<int> truth(80);
  for (std::size_t i = 0; i < 80; ++i) truth[i] = i < 40 ? 0 : 1;
  CHECK(adjusted_rand_index(a.labels, truth, true) == 1.0);
}

TEST_CASE("selected stability bounds both trivial selections") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    std::mt19937_64 rng(seed);
    Points p;
    for (int b = 0; b < 4; ++b) add_blob(p, rng, 6.0 * b, 3.0 * (b % 2), 0.4 + 0.3 * b, 40);
    const std::size_t mcs = 6;
    const auto tree = condense(mst_mreach(p.view(), core_distances(p.view(), mcs)), p.view().n, mcs);
    const auto stab = cluster_stabilities(tree);
    std::vector<std::uint8_t> has_child(tree.cluster_count(), 0);
    for (const auto& r : tree.rows)
      if (tree.is_cluster(r.child)) has_child[r.parent - tree.root()] = 1;
    double selected = 0.0, leaves = 0.0;
    for (auto c : selected_clusters(tree)) selected += stab[c - tree.root()];
    for (std::size_t c = 1; c < stab.size(); ++c)
      if (!has_child[c]) leaves += stab[c];
    // Root-only selection: the root's children are the only candidates below it.
    double top = 0.0;
    for (const auto& r : tree.rows)
      if (r.parent == tree.root() && tree.is_cluster(r.child)) top += stab[r.child - tree.root()];
    CHECK(selected >= leaves - 1e-9 * leaves);
    CHECK(selected >= top - 1e-9 * top);
  }
}

TEST_CASE("hdbscan cluster sizes and permutation invariance") {
  std::mt19937_64 rng(5);
  Points p;
  add_blob(p, rng, 0, 0, 1, 100);
  add_blob(p, rng, 10, 0, 1, 100);
  add_blob(p, rng, 5, 9, 1, 100);
  const std::size_t n = p.view().n, mcs = 15;
  const auto a = hdbscan(p.view(), mcs);
  CHECK(a.n_clusters == 3);
  for (int c = 0; c < static_cast<int>(a.n_clusters); ++c)
    CHECK(std::count(a.labels.begin(), a.labels.end(), c) >= static_cast<long>(mcs));
  for (std::size_t i = 0; i < n; ++i)
    if (a.labels[i] == kNoise) CHECK(a.probabilities[i] == 0.0);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Points q;
  for (std::size_t i = 0; i < n; ++i) q.x.insert(q.x.end(), p.x.begin() + 2 * perm[i], p.x.begin() + 2 * perm[i] + 2);
  const auto b = hdbscan(q.view(), mcs);
  std::vector<int> back(n);
  for (std::size_t i = 0; i < n; ++i) back[perm[i]] = b.labels[i];
  CHECK(same_partition(a.labels, back));
}

TEST_CASE("a cluster larger than half the points is unique") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Points p = uniform(200, 100 + seed);
    const auto a = hdbscan(p.view(), 101);
    CHECK(a.n_clusters <= 1);
  }
  const Points two = line({0, 1});
  CHECK(hdbscan(two.view(), 2).labels.size() == 2);
  const Points one = line({0});
  CHECK_THROWS_AS(hdbscan(one.view(), 2), Error);
}

TEST_CASE("decay fit recovers a synthetic decay") {
  std::vector<double> exact, noisy;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 20; k <= 149; ++k) {
    const double v = 40.0 * std::exp(-(k - 20) / 15.0) + 10.0;
    exact.push_back(v);
    noisy.push_back(v + g(rng));
  }
  const DecayFit e = fit_decay(20, exact);
  CHECK(e.tau == doctest::Approx(15.0).epsilon(1e-6));
  CHECK(e.C == doctest::Approx(40.0).epsilon(1e-6));
  CHECK(e.b == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(e.k_star == 65);
  CHECK(e.k_max == 149);

  const DecayFit f = fit_decay(20, noisy);
  CHECK(!f.degenerate);
  CHECK(std::abs(f.tau - 15.0) <= 0.2 * 15.0);
  CHECK(f.k_star == 20 + static_cast<std::size_t>(std::ceil(3.0 * f.tau - 1e-9)));
  CHECK(f.k_star >= 20);
  CHECK(f.k_star <= 149);

  const DecayFit flat = fit_decay(20, std::vector<double>(130, 7.0));
  CHECK(flat.degenerate);
  CHECK(flat.tau == 0.0);
  CHECK(flat.b == 7.0);
  CHECK(flat.k_star == 20);
}

TEST_CASE("decay fit keeps k_star inside the range") {
  std::vector<double> slow;
  for (int k = 20; k <= 149; ++k) slow.push_back(30.0 * std::exp(-(k - 20) / 100.0) + 2.0);
  const DecayFit f = fit_decay(20, slow);
  CHECK(f.tau > 0.0);
  CHECK(f.tau <= 129.0);
  CHECK(f.k_star == 149);
}

TEST_CASE("select_k sweeps the requested range") {
  std::mt19937_64 rng(3);
  Points p;
  for (int b = 0; b < 6; ++b) add_blob(p, rng, 12.0 * (b % 3), 12.0 * (b / 3), 1.0, 40);
  const DecayFit f = select_k(p.view(), 4, 40);
  CHECK(f.ks.size() == 37);
  CHECK(f.counts.size() == 37);
  CHECK(f.k_star >= 4);
  CHECK(f.k_star <= 40);
  CHECK(f.counts[0] == static_cast<double>(hdbscan(p.view(), 4).n_clusters));
  CHECK(f.counts[36] == static_cast<double>(hdbscan(p.view(), 40).n_clusters));
  const DecayFit threaded = select_k(p.view(), 4, 40, 3);
  CHECK(threaded.counts == f.counts);
  CHECK_THROWS_AS(select_k(p.view(), 20, 240), Error);
}

TEST_CASE("spectral clustering separates blobs and ignores scale") {
  std::mt19937_64 rng(11);
  Points p;
  add_blob(p, rng, 0, 0, 1, 120);
  add_blob(p, rng, 40, 0, 1, 120);
  std::vector<int> truth(240);
  for (std::size_t i = 0; i < 240; ++i) truth[i] = i < 120 ? 0 : 1;
  SpectralParams sp;
  sp.n_clusters = 2;
  sp.n_neighbors = 10;
  sp.seed = 1;
  const auto a = spectral_cluster(p.view(), sp);
  CHECK(a.n_clusters == 2);
  CHECK(adjusted_rand_index(a.labels, truth) == 1.0);
  CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l >= 0; }));

  Points scaled = p;
  for (double& v : scaled.x) v *= 3.0;
  CHECK(spectral_cluster(scaled.view(), sp).labels == a.labels);

  sp.n_clusters = 3;
  std::mt19937_64 r2(2);
  Points many;
  for (int b = 0; b < 5; ++b) add_blob(many, r2, 100.0 * b, 0, 0.1, 20);
  sp.n_neighbors = 5;
  CHECK_THROWS_AS(spectral_cluster(many.view(), sp), Error);
}

TEST_CASE("spectral clustering with one cluster per point") {
  const Points p = uniform(6, 1);
  SpectralParams sp;
  sp.n_clusters = 6;
  const auto a = spectral_cluster(p.view(), sp);
  std::set<int> distinct(a.labels.begin(), a.labels.end());
  CHECK(distinct.size() == 6);
  sp.n_clusters = 7;
  CHECK_THROWS_AS(spectral_cluster(p.view(), sp), Error);
  sp.n_clusters = 1;
  CHECK_THROWS_AS(spectral_cluster(p.view(), sp), Error);
}

TEST_CASE("kmeans on separated groups") {
  Points p = line({0, 0.1, 0.2, 5, 5.1, 9, 9.2});
  const auto r = kmeans(p.view(), 3, 5, 100, 1e-9, 4);
  CHECK(canonical_labels(r.labels) == std::vector<int>{0, 0, 0, 1, 1, 2, 2});
  CHECK(r.inertia == doctest::Approx(0.02 + 0.005 + 0.02));
}

TEST_CASE("adjusted Rand index") {
  const std::vector<int> a{0, 0, 1, 1};
  CHECK(adjusted_rand_index(a, a) == 1.0);
  CHECK(adjusted_rand_index(a, {5, 5, 2, 2}) == 1.0);
  CHECK(adjusted_rand_index(a, {0, 1, 0, 1}) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(adjusted_rand_index(a, {0, 1}), Error);
  // Noise counts as a label unless excluded.
  const std::vector<int> x{0, 0, 1, 1, -1, -1}, y{0, 0, 1, 1, 0, 1};
  CHECK(adjusted_rand_index(x, y) < 1.0);
  CHECK(adjusted_rand_index(x, y, true) == 1.0);
  CHECK(canonical_labels({4, 4, -1, 2, 4, 7}) == std::vector<int>{0, 0, -1, 1, 0, 2});
}
