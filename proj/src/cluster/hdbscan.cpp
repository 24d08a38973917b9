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
#include <deque>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"

namespace stemml::cluster {

namespace {

constexpr std::size_t kExactCoreLimit = 20000;

double lambda_of(double distance) { return distance > 1.0 / kLambdaCap ? 1.0 / distance : kLambdaCap; }

struct Dendrogram {
  // Internal node t (id n + t) merges left/right at distance.
  std::vector<std::uint32_t> left, right;
  std::vector<double> distance;
  std::vector<std::size_t> size;  // for all 2n - 1 nodes
};

Dendrogram single_linkage(std::vector<MstEdge> mst, std::size_t n) {
  std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& x, const MstEdge& y) { return x.weight < y.weight; });
  Dendrogram d;
  d.size.assign(n + mst.size(), 1);
  std::vector<std::uint32_t> parent(n), node_of(n);
  std::iota(parent.begin(), parent.end(), 0u);
  std::iota(node_of.begin(), node_of.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t t = 0; t < mst.size(); ++t) {
    const std::uint32_t ra = find(mst[t].a), rb = find(mst[t].b);
    require(ra != rb, Errc::internal, "MST edge closes a cycle");
    const auto id = static_cast<std::uint32_t>(n + t);
    d.left.push_back(node_of[ra]);
    d.right.push_back(node_of[rb]);
    d.distance.push_back(mst[t].weight);
    d.size[id] = d.size[node_of[ra]] + d.size[node_of[rb]];
    parent[rb] = ra;
    node_of[ra] = id;
  }
  return d;
}

}  // namespace

double mutual_reachability(double d, double core_a, double core_b) {
  require(d >= 0.0 && core_a >= 0.0 && core_b >= 0.0, Errc::invalid_argument, "mutual reachability inputs must be >= 0");
  return std::max({d, core_a, core_b});
}

knn::NeighborGraph core_graph(PointsView data, std::size_t k, unsigned threads) {
  if (data.n <= kExactCoreLimit) return knn::knn_brute(data, k, threads);
  spdlog::info("core distances for {} points use the approximate kNN graph", data.n);
  return knn::knn_approximate(data, k, 0, threads);
}

CoreDistances core_distances(const knn::NeighborGraph& g, std::size_t k_core) {
  require(k_core >= 1 && k_core <= g.k, Errc::invalid_argument,
          fmt::format("k_core = {} outside the graph's 1..{}", k_core, g.k));
  CoreDistances c{k_core, std::vector<double>(g.n)};
  for (std::size_t i = 0; i < g.n; ++i) c.values[i] = g.dists(i)[k_core - 1];
  return c;
}

CoreDistances core_distances(PointsView data, std::size_t k_core, unsigned threads) {
  require(k_core >= 1 && k_core < data.n, Errc::invalid_argument,
          fmt::format("k_core = {} must be in [1, n) with n = {}", k_core, data.n));
  return core_distances(core_graph(data, k_core, threads), k_core);
}

std::vector<MstEdge> mst_mreach(PointsView data, const CoreDistances& cores) {
  const std::size_t n = data.n;
  require(n >= 1, Errc::invalid_argument, "mst needs at least one point");
  require(cores.values.size() == n, Errc::shape, "core distances do not match the data");
  std::vector<MstEdge> edges;
  edges.reserve(n - 1);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> from(n, 0);
  std::vector<std::uint8_t> in_tree(n, 0);
  std::size_t v = 0;
  in_tree[0] = 1;
  for (std::size_t step = 1; step < n; ++step) {
    const double* pv = data.row_ptr(v);
    const double cv = cores.values[v];
    std::size_t next = n;
    double next_w = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < n; ++u) {
      if (in_tree[u]) continue;
      const double d = std::sqrt(knn::squared_distance(pv, data.row_ptr(u), data.dim));
      const double w = std::max({d, cv, cores.values[u]});
      if (w < best[u]) {
        best[u] = w;
        from[u] = static_cast<std::uint32_t>(v);
      }
      if (best[u] < next_w) {
        next_w = best[u];
        next = u;
      }
    }
    in_tree[next] = 1;
    edges.push_back({from[next], static_cast<std::uint32_t>(next), next_w});
    v = next;
  }
  return edges;
}

std::size_t CondensedTree::cluster_count() const {
  std::uint32_t top = root();
  for (const Row& r : rows) top = std::max(top, std::max(r.parent, is_cluster(r.child) ? r.child : root()));
  return static_cast<std::size_t>(top - root() + 1);
}

CondensedTree condense(std::vector<MstEdge> mst, std::size_t n, std::size_t min_cluster_size) {
  require(min_cluster_size >= 2, Errc::invalid_argument, "min_cluster_size must be >= 2");
  require(mst.size() + 1 == n || (n == 0 && mst.empty()), Errc::invalid_argument, "a spanning tree has n - 1 edges");
  CondensedTree tree;
  tree.n_points = n;
  if (n <= 1) return tree;
  const Dendrogram d = single_linkage(std::move(mst), n);
  const std::size_t total = 2 * n - 1;
  const auto top = static_cast<std::uint32_t>(total - 1);
  auto node_size = [&](std::uint32_t id) { return d.size[id]; };
  auto children = [&](std::uint32_t id) { return std::pair{d.left[id - n], d.right[id - n]}; };

  std::vector<std::uint32_t> relabel(total, 0);
  std::vector<std::uint8_t> ignore(total, 0);
  relabel[top] = static_cast<std::uint32_t>(n);
  std::uint32_t next_label = static_cast<std::uint32_t>(n) + 1;

  auto fall_out = [&](std::uint32_t sub_root, std::uint32_t parent_label, double lambda) {
    std::vector<std::uint32_t> stack{sub_root};
    while (!stack.empty()) {
      const std::uint32_t x = stack.back();
      stack.pop_back();
      ignore[x] = 1;
      if (x < n) {
        tree.rows.push_back({parent_label, x, lambda, 1});
      } else {
        const auto [l, r] = children(x);
        stack.push_back(r);
        stack.push_back(l);
      }
    }
  };

  std::deque<std::uint32_t> queue{top};
  while (!queue.empty()) {
    const std::uint32_t node = queue.front();
    queue.pop_front();
    if (node < n || ignore[node]) continue;
    const auto [l, r] = children(node);
    queue.push_back(l);
    queue.push_back(r);
    const double lambda = lambda_of(d.distance[node - n]);
    const std::size_t ls = node_size(l), rs = node_size(r);
    const std::uint32_t label = relabel[node];
    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      relabel[l] = next_label++;
      tree.rows.push_back({label, relabel[l], lambda, ls});
      relabel[r] = next_label++;
      tree.rows.push_back({label, relabel[r], lambda, rs});
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      fall_out(l, label, lambda);
      fall_out(r, label, lambda);
    } else if (ls < min_cluster_size) {
      relabel[r] = label;
      fall_out(l, label, lambda);
    } else {
      relabel[l] = label;
      fall_out(r, label, lambda);
    }
  }
  return tree;
}

std::vector<double> cluster_stabilities(const CondensedTree& tree) {
  const std::size_t m = tree.cluster_count();
  const std::uint32_t root = tree.root();
  std::vector<double> birth(m, 0.0), stability(m, 0.0);
  for (const auto& row : tree.rows)
    if (tree.is_cluster(row.child)) birth[row.child - root] = row.lambda;
  for (const auto& row : tree.rows)
    stability[row.parent - root] += (row.lambda - birth[row.parent - root]) * static_cast<double>(row.child_size);
  return stability;
}

std::vector<std::uint32_t> selected_clusters(const CondensedTree& tree, const EomOptions& options) {
  const std::size_t m = tree.cluster_count();
  const std::uint32_t root = tree.root();
  std::vector<double> stability = cluster_stabilities(tree);
  std::vector<std::vector<std::uint32_t>> kids(m);
  for (const auto& row : tree.rows)
    if (tree.is_cluster(row.child)) kids[row.parent - root].push_back(row.child - root);
  std::vector<std::uint8_t> selected(m, 0);
  auto deselect_below = [&](std::uint32_t c) {
    std::vector<std::uint32_t> stack(kids[c].begin(), kids[c].end());
    while (!stack.empty()) {
      const std::uint32_t x = stack.back();
      stack.pop_back();
      selected[x] = 0;
      stack.insert(stack.end(), kids[x].begin(), kids[x].end());
    }
  };
  // Children carry larger ids than their parent, so descending order is bottom-up.
  const std::size_t last = options.allow_single_cluster ? 0 : 1;
  for (std::size_t c = m; c-- > last;) {
    double subtree = 0.0;
    for (std::uint32_t k : kids[c]) subtree += stability[k];
    if (!kids[c].empty() && subtree > stability[c]) {
      stability[c] = subtree;
    } else {
      selected[c] = 1;
      deselect_below(static_cast<std::uint32_t>(c));
    }
  }
  std::vector<std::uint32_t> out;
  for (std::size_t c = 0; c < m; ++c)
    if (selected[c]) out.push_back(static_cast<std::uint32_t>(c + root));
  return out;
}

ClusterAssignment extract_eom(const CondensedTree& tree, const EomOptions& options) {
  const std::size_t n = tree.n_points, m = tree.cluster_count();
  const std::uint32_t root = tree.root();
  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  out.probabilities.assign(n, 0.0);
  const std::vector<std::uint32_t> chosen = selected_clusters(tree, options);
  out.n_clusters = chosen.size();
  std::vector<int> label_of(m, kNoise);
  for (std::size_t t = 0; t < chosen.size(); ++t) label_of[chosen[t] - root] = static_cast<int>(t);
  std::vector<std::uint32_t> parent_of(m, root);
  for (const auto& row : tree.rows)
    if (tree.is_cluster(row.child)) parent_of[row.child - root] = row.parent;

  std::vector<double> point_lambda(n, 0.0);
  for (const auto& row : tree.rows) {
    if (tree.is_cluster(row.child)) continue;
    point_lambda[row.child] = row.lambda;
    for (std::uint32_t c = row.parent;; c = parent_of[c - root]) {
      if (label_of[c - root] != kNoise) {
        out.labels[row.child] = label_of[c - root];
        break;
      }
      if (c == root) break;
    }
  }
  std::vector<double> lambda_max(chosen.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (out.labels[i] != kNoise) lambda_max[out.labels[i]] = std::max(lambda_max[out.labels[i]], point_lambda[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] == kNoise) continue;
    const double lm = lambda_max[out.labels[i]];
    out.probabilities[i] = lm > 0.0 ? std::min(point_lambda[i], lm) / lm : 1.0;
  }
  return out;
}

ClusterAssignment hdbscan(PointsView data, const knn::NeighborGraph& g, std::size_t min_cluster_size, std::size_t k_core) {
  if (k_core == 0) k_core = min_cluster_size;
  require(g.n == data.n, Errc::shape, "graph does not match the data");
  const CoreDistances cores = core_distances(g, k_core);
  return extract_eom(condense(mst_mreach(data, cores), data.n, min_cluster_size));
}

ClusterAssignment hdbscan(PointsView data, std::size_t min_cluster_size, std::size_t k_core, unsigned threads) {
  require(data.n >= 2, Errc::invalid_argument, "hdbscan needs at least 2 points");
  require(min_cluster_size >= 2, Errc::invalid_argument, "min_cluster_size must be >= 2");
  if (k_core == 0) k_core = min_cluster_size;
  // Cores saturate at n - 1 neighbors for tiny inputs.
  const std::size_t k = std::min(k_core, data.n - 1);
  const knn::NeighborGraph g = core_graph(data, k, threads);
  return extract_eom(condense(mst_mreach(data, core_distances(g, k)), data.n, min_cluster_size));
}

}  // namespace stemml::cluster
