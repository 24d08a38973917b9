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

#include "stemml/knn/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Core>
#include <fmt/format.h>

#include "stemml/core/error.hpp"
#include "stemml/core/parallel.hpp"
#include "stemml/core/random.hpp"
#include "stemml/io/npy.hpp"

namespace stemml::knn {

namespace {

struct Scored {
  double d2;
  std::uint32_t id;
  bool operator<(const Scored& o) const { return d2 < o.d2 || (d2 == o.d2 && id < o.id); }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_k(std::size_t n, std::size_t k) {
  require(k >= 1, Errc::invalid_argument, "k must be >= 1");
  require(k < n, Errc::invalid_argument, fmt::format("k = {} must be < n = {}", k, n));
}

void emit_row(NeighborGraph& g, std::size_t i, std::span<const Scored> best) {
  for (std::size_t j = 0; j < g.k; ++j) {
    g.indices[i * g.k + j] = best[j].id;
    g.distances[i * g.k + j] = std::sqrt(best[j].d2);
  }
}

void brute_direct(PointsView data, NeighborGraph& g, unsigned threads) {
  const std::size_t n = data.n;
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<Scored> all;
    all.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) all.push_back({squared_distance(data.row_ptr(i), data.row_ptr(j), data.dim), static_cast<std::uint32_t>(j)});
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(g.k), all.end());
    emit_row(g, i, all);
  });
}

// Ranks with |a|^2 + |b|^2 - 2ab from a blocked product, then re-scores every
// candidate within the rounding bound of the k-th value with the exact kernel.
// The result equals brute_direct.
void brute_gemm(PointsView data, NeighborGraph& g, unsigned threads) {
  const std::size_t n = data.n, dim = data.dim;
  const Eigen::Map<const RowMatrix> x(data.data, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < dim; ++t) s += data.row_ptr(i)[t] * data.row_ptr(i)[t];
    norms[i] = s;
  }
  const double max_norm = *std::max_element(norms.begin(), norms.end());
  const double gamma = 2.0 * (static_cast<double>(dim) + 4.0) * std::numeric_limits<double>::epsilon();

  constexpr std::size_t kBlock = 256;
  Eigen::setNbThreads(static_cast<int>(resolve_threads(threads)));
  for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
    const std::size_t rows = std::min(kBlock, n - b0);
    const RowMatrix dots = x.middleRows(static_cast<Eigen::Index>(b0), static_cast<Eigen::Index>(rows)) * x.transpose();
    parallel_for(rows, threads, [&](std::size_t r) {
      const std::size_t i = b0 + r;
      std::vector<double> approx(n);
      for (std::size_t j = 0; j < n; ++j) approx[j] = norms[i] + norms[j] - 2.0 * dots(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      approx[i] = std::numeric_limits<double>::infinity();
      std::vector<double> sorted = approx;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(g.k - 1), sorted.end());
      const double threshold = sorted[g.k - 1] + 2.0 * gamma * (norms[i] + max_norm);
      std::vector<Scored> cand;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && approx[j] <= threshold)
          cand.push_back({squared_distance(data.row_ptr(i), data.row_ptr(j), dim), static_cast<std::uint32_t>(j)});
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(g.k), cand.end());
      emit_row(g, i, cand);
    });
  }
}

/// Bounded max-heap of (d2, id) with a "new" flag per entry.
class NeighborHeap {
 public:
  explicit NeighborHeap(std::size_t k) : k_(k) { items_.reserve(k); }

  double worst() const { return items_.size() < k_ ? std::numeric_limits<double>::infinity() : items_.front().d2; }
  bool contains(std::uint32_t id) const {
    return std::any_of(items_.begin(), items_.end(), [&](const Item& it) { return it.id == id; });
  }
  /// Inserts when strictly closer than the current worst and not present.
  bool push(double d2, std::uint32_t id) {
    if (!(d2 < worst()) || contains(id)) return false;
    if (items_.size() == k_) {
      std::pop_heap(items_.begin(), items_.end());
      items_.pop_back();
    }
    items_.push_back({d2, id, true});
    std::push_heap(items_.begin(), items_.end());
    return true;
  }
  std::size_t size() const { return items_.size(); }
  auto& items() { return items_; }
  const auto& items() const { return items_; }

  struct Item {
    double d2;
    std::uint32_t id;
    bool is_new;
    bool operator<(const Item& o) const { return d2 < o.d2 || (d2 == o.d2 && id < o.id); }
  };

 private:
  std::size_t k_;
  std::vector<Item> items_;
};

void sample_into(std::vector<std::uint32_t>& list, std::size_t cap, Rng& rng) {
  if (list.size() <= cap) return;
  std::shuffle(list.begin(), list.end(), rng);
  list.resize(cap);
}

}  // namespace

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t t = 0;
  for (; t + 4 <= dim; t += 4) {
    const double d0 = a[t] - b[t], d1 = a[t + 1] - b[t + 1], d2 = a[t + 2] - b[t + 2], d3 = a[t + 3] - b[t + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; t < dim; ++t) {
    const double d = a[t] - b[t];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

NeighborGraph NeighborGraph::prefix(std::size_t k_new) const {
  require(k_new <= k, Errc::invalid_argument, fmt::format("prefix {} exceeds k = {}", k_new, k));
  NeighborGraph out(n, k_new);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k_new; ++j) {
      out.indices[i * k_new + j] = indices[i * k + j];
      out.distances[i * k_new + j] = distances[i * k + j];
    }
  return out;
}

void NeighborGraph::validate() const {
  require(indices.size() == n * k && distances.size() == n * k, Errc::validation, "neighbor graph arrays must be n*k");
  for (std::size_t i = 0; i < n; ++i) {
    auto ids = neighbors(i);
    auto ds = dists(i);
    for (std::size_t j = 0; j < k; ++j) {
      require(ids[j] < n, Errc::validation, fmt::format("row {}: neighbor id {} out of range", i, ids[j]));
      require(ids[j] != i, Errc::validation, fmt::format("row {} contains itself", i));
      require(std::isfinite(ds[j]) && ds[j] >= 0.0, Errc::validation, fmt::format("row {}: invalid distance", i));
      require(j == 0 || ds[j] >= ds[j - 1], Errc::validation, fmt::format("row {}: distances not sorted", i));
      for (std::size_t t = 0; t < j; ++t)
        require(ids[t] != ids[j], Errc::validation, fmt::format("row {}: duplicate neighbor {}", i, ids[j]));
    }
  }
}

NeighborGraph knn_brute(PointsView data, std::size_t k, unsigned threads) {
  check_k(data.n, k);
  require(data.n <= std::numeric_limits<std::uint32_t>::max(), Errc::invalid_argument, "too many points");
  NeighborGraph g(data.n, k);
  if (data.dim >= 64 && data.n >= 256) {
    brute_gemm(data, g, threads);
  } else {
    brute_direct(data, g, threads);
  }
  return g;
}

CandidateLists rp_forest(PointsView data, const ForestParams& params, unsigned threads) {
  const std::size_t n = data.n, dim = data.dim;
  require(n >= 2, Errc::invalid_argument, "rp_forest needs at least 2 points");
  require(params.leaf_size >= 1, Errc::invalid_argument, "leaf_size must be >= 1");
  std::vector<std::vector<std::vector<std::uint32_t>>> leaves(params.n_trees);

  parallel_for(params.n_trees, threads, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, n}};
    std::vector<double> normal(dim);
    while (!stack.empty()) {
      auto [lo, hi] = stack.back();
      stack.pop_back();
      const std::size_t size = hi - lo;
      if (size <= params.leaf_size) {
        leaves[t].emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(hi));
        continue;
      }
      std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
      const std::uint32_t a = ids[pick(rng)];
      std::uint32_t b = ids[pick(rng)];
      for (int tries = 0; tries < 8 && b == a; ++tries) b = ids[pick(rng)];
      // Hyperplane through the midpoint of a and b, normal along b - a.
      double offset = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        normal[d] = data.row_ptr(b)[d] - data.row_ptr(a)[d];
        offset += normal[d] * 0.5 * (data.row_ptr(a)[d] + data.row_ptr(b)[d]);
      }
      std::vector<std::uint32_t> left, right;
      for (std::size_t s = lo; s < hi; ++s) {
        const double* p = data.row_ptr(ids[s]);
        double proj = -offset;
        for (std::size_t d = 0; d < dim; ++d) proj += normal[d] * p[d];
        if (proj < 0.0 || (proj == 0.0 && std::bernoulli_distribution(0.5)(rng))) {
          left.push_back(ids[s]);
        } else {
          right.push_back(ids[s]);
        }
      }
      if (left.empty() || right.empty()) {
        // Degenerate split (duplicates): halve at random.
        std::shuffle(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(hi), rng);
      } else {
        std::copy(left.begin(), left.end(), ids.begin() + static_cast<std::ptrdiff_t>(lo));
        std::copy(right.begin(), right.end(), ids.begin() + static_cast<std::ptrdiff_t>(lo + left.size()));
      }
      const std::size_t mid = (left.empty() || right.empty()) ? lo + size / 2 : lo + left.size();
      stack.push_back({mid, hi});
      stack.push_back({lo, mid});
    }
  });

  CandidateLists cand(n);
  for (const auto& tree : leaves)
    for (const auto& leaf : tree)
      for (std::uint32_t p : leaf)
        for (std::uint32_t q : leaf)
          if (p != q) cand[p].push_back(q);
  for (auto& c : cand) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
  }
  return cand;
}

NeighborGraph nn_descent(PointsView data, std::size_t k, const CandidateLists& init, const DescentParams& params,
                         DescentStats* stats, unsigned threads) {
  const std::size_t n = data.n, dim = data.dim;
  check_k(n, k);
  require(init.empty() || init.size() == n, Errc::invalid_argument, "candidate lists must have one entry per point");
  require(params.sample_rate > 0.0, Errc::invalid_argument, "sample_rate must be > 0");
  Rng rng(params.seed);

  std::vector<NeighborHeap> heaps(n, NeighborHeap(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (!init.empty())
      for (std::uint32_t j : init[i])
        if (j != i) heaps[i].push(squared_distance(data.row_ptr(i), data.row_ptr(j), dim), j);
    std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(n - 1));
    // Rows short of k are filled with random points.
    for (std::size_t guard = 0; heaps[i].size() < k && guard < 64 * n; ++guard) {
      const std::uint32_t j = any(rng);
      if (j != i) heaps[i].push(squared_distance(data.row_ptr(i), data.row_ptr(j), dim), j);
    }
    for (std::uint32_t j = 0; heaps[i].size() < k; ++j)
      if (j != i) heaps[i].push(squared_distance(data.row_ptr(i), data.row_ptr(j), dim), j);
  }

  const std::size_t cap = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.sample_rate * static_cast<double>(k))));
  if (stats) *stats = {};
  constexpr std::size_t kBlock = 512;
  struct Proposal {
    std::uint32_t target, id;
    double d2;
  };

  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    std::vector<std::vector<std::uint32_t>> fresh(n), old(n), rev_fresh(n), rev_old(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> new_slots;
      for (std::size_t s = 0; s < heaps[i].items().size(); ++s) {
        auto& item = heaps[i].items()[s];
        if (item.is_new) {
          new_slots.push_back(s);
        } else {
          old[i].push_back(item.id);
        }
      }
      if (new_slots.size() > cap) {
        std::shuffle(new_slots.begin(), new_slots.end(), rng);
        new_slots.resize(cap);
      }
      for (std::size_t s : new_slots) {
        auto& item = heaps[i].items()[s];
        item.is_new = false;
        fresh[i].push_back(item.id);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint32_t j : fresh[i]) rev_fresh[j].push_back(static_cast<std::uint32_t>(i));
      for (std::uint32_t j : old[i]) rev_old[j].push_back(static_cast<std::uint32_t>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
      sample_into(rev_fresh[i], cap, rng);
      sample_into(rev_old[i], cap, rng);
      auto merge = [](std::vector<std::uint32_t>& into, const std::vector<std::uint32_t>& extra) {
        into.insert(into.end(), extra.begin(), extra.end());
        std::sort(into.begin(), into.end());
        into.erase(std::unique(into.begin(), into.end()), into.end());
      };
      merge(fresh[i], rev_fresh[i]);
      merge(old[i], rev_old[i]);
    }

    // Local join: distances in parallel per block, insertions applied in order.
    std::size_t updates = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
      const std::size_t rows = std::min(kBlock, n - b0);
      std::vector<std::vector<Proposal>> proposals(rows);
      parallel_for(rows, threads, [&](std::size_t r) {
        const std::size_t i = b0 + r;
        const auto& f = fresh[i];
        const auto& o = old[i];
        auto consider = [&](std::uint32_t u, std::uint32_t v) {
          if (u == v) return;
          const double d2 = squared_distance(data.row_ptr(u), data.row_ptr(v), dim);
          if (d2 < heaps[u].worst()) proposals[r].push_back({u, v, d2});
          if (d2 < heaps[v].worst()) proposals[r].push_back({v, u, d2});
        };
        for (std::size_t a = 0; a < f.size(); ++a) {
          for (std::size_t b = a + 1; b < f.size(); ++b) consider(f[a], f[b]);
          for (std::uint32_t v : o) consider(f[a], v);
        }
      });
      for (const auto& list : proposals)
        for (const Proposal& p : list) updates += heaps[p.target].push(p.d2, p.id) ? 1 : 0;
    }
    if (stats) stats->updates.push_back(updates);
    if (static_cast<double>(updates) < params.delta * static_cast<double>(n * k)) {
      if (stats) stats->converged = true;
      break;
    }
  }

  NeighborGraph g(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Scored> row;
    for (const auto& item : heaps[i].items()) row.push_back({item.d2, item.id});
    std::sort(row.begin(), row.end());
    emit_row(g, i, row);
  }
  return g;
}

std::size_t default_n_trees(std::size_t n) {
  const double t = std::ceil(5.0 * std::log2(static_cast<double>(std::max<std::size_t>(n, 2))) / 4.0);
  return std::min<std::size_t>(32, static_cast<std::size_t>(t));
}

std::size_t default_leaf_size(std::size_t k) { return std::max<std::size_t>(k + 1, 30); }

NeighborGraph knn_approximate(PointsView data, std::size_t k, std::uint64_t seed, unsigned threads) {
  check_k(data.n, k);
  const ForestParams fp{default_n_trees(data.n), default_leaf_size(k), derive_seed(seed, 1)};
  const CandidateLists cand = rp_forest(data, fp, threads);
  DescentParams dp;
  dp.seed = derive_seed(seed, 2);
  return nn_descent(data, k, cand, dp, nullptr, threads);
}

double knn_recall(const NeighborGraph& approx, const NeighborGraph& exact) {
  require(approx.n == exact.n && approx.k == exact.k, Errc::shape,
          fmt::format("recall needs equal shapes, got {}x{} and {}x{}", approx.n, approx.k, exact.n, exact.k));
  if (approx.n == 0 || approx.k == 0) return 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < approx.n; ++i) {
    std::vector<std::uint32_t> a(approx.neighbors(i).begin(), approx.neighbors(i).end());
    std::vector<std::uint32_t> e(exact.neighbors(i).begin(), exact.neighbors(i).end());
    std::sort(a.begin(), a.end());
    std::sort(e.begin(), e.end());
    std::vector<std::uint32_t> common;
    std::set_intersection(a.begin(), a.end(), e.begin(), e.end(), std::back_inserter(common));
    total += static_cast<double>(common.size()) / static_cast<double>(approx.k);
  }
  return total / static_cast<double>(approx.n);
}

void save_graph(const std::filesystem::path& stem, const NeighborGraph& g) {
  const std::vector<std::size_t> shape{g.n, g.k};
  io::save_npy<std::uint32_t>(stem.string() + "_indices.npy", g.indices, shape);
  io::save_npy<double>(stem.string() + "_distances.npy", g.distances, shape);
}

NeighborGraph load_graph(const std::filesystem::path& stem) {
  auto idx = io::load_npy<std::uint32_t>(stem.string() + "_indices.npy");
  auto dist = io::load_npy<double>(stem.string() + "_distances.npy");
  require(idx.shape.size() == 2 && idx.shape == dist.shape, Errc::shape, "neighbor graph arrays must be matching n x k");
  NeighborGraph g;
  g.n = idx.shape[0];
  g.k = idx.shape[1];
  g.indices = std::move(idx.data);
  g.distances = std::move(dist.data);
  g.validate();
  return g;
}

}  // namespace stemml::knn
