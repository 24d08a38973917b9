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

#include "stemml/umap/umap.hpp"

#include <algorithm>
#include <numeric>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/core/error.hpp"
#include "stemml/core/parallel.hpp"
#include "stemml/core/random.hpp"
#include "stemml/linalg/lm.hpp"

namespace stemml::umap {

namespace {

constexpr double kClip = 4.0;
constexpr std::uint64_t kStreamKnn = 10, kStreamInit = 20, kStreamSgd = 30;

double clip(double v) { return std::clamp(v, -kClip, kClip); }

/// Uniform index in [0, n) via multiply-shift.
std::uint32_t draw_index(Rng& rng, std::size_t n) {
  return static_cast<std::uint32_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

}  // namespace

KnnMethod parse_knn_method(const std::string& text) {
  if (text == "auto") return KnnMethod::automatic;
  if (text == "exact") return KnnMethod::exact;
  if (text == "nndescent") return KnnMethod::nndescent;
  fail(Errc::invalid_argument, fmt::format("unknown knn method '{}' (expected auto, exact or nndescent)", text));
}

std::string knn_method_name(KnnMethod m) {
  switch (m) {
    case KnnMethod::exact: return "exact";
    case KnnMethod::nndescent: return "nndescent";
    default: return "auto";
  }
}

void UmapParams::validate() const {
  require(n_neighbors >= 2, Errc::invalid_argument, "n_neighbors must be >= 2");
  require(min_dist >= 0.0, Errc::invalid_argument, "min_dist must be >= 0");
  require(spread > 0.0, Errc::invalid_argument, "spread must be > 0");
  require(d >= 1, Errc::invalid_argument, "embedding dimension must be >= 1");
  require(learning_rate > 0.0, Errc::invalid_argument, "learning rate must be > 0");
  require((a == 0.0 && b == 0.0) || (a > 0.0 && b > 0.0), Errc::invalid_argument, "curve a and b must both be > 0 or both 0");
}

std::size_t UmapParams::resolved_epochs(std::size_t n) const {
  if (n_epochs > 0) return n_epochs;
  if (n <= 10000) return 200;
  return static_cast<std::size_t>(std::clamp(5e6 / static_cast<double>(n), 30.0, 200.0));
}

SmoothKnn smooth_knn(const knn::NeighborGraph& g, double target, unsigned threads) {
  const std::size_t n = g.n, k = g.k;
  if (target <= 0.0) target = std::log2(static_cast<double>(k));
  SmoothKnn s;
  s.rho.assign(n, 0.0);
  s.sigma.assign(n, 1.0);
  s.clamped.assign(n, 0);
  const double tol = 1e-5 * target;

  parallel_for(n, threads, [&](std::size_t i) {
    const auto ds = g.dists(i);
    double rho = 0.0, mean = 0.0;
    for (double d : ds) {
      if (rho == 0.0 && d > 0.0) rho = d;
      mean += d;
    }
    mean /= static_cast<double>(k);
    auto psum = [&](double sigma) {
      double acc = 0.0;
      for (double d : ds) acc += std::exp(-std::max(0.0, d - rho) / sigma);
      return acc;
    };
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double p = psum(mid);
      if (std::abs(p - target) < tol) break;
      if (p > target) {
        hi = mid;
        mid = 0.5 * (lo + hi);
      } else {
        lo = mid;
        mid = std::isinf(hi) ? 2.0 * mid : 0.5 * (lo + hi);
      }
      if (mid == 0.0) break;
    }
    const double floor = mean > 0.0 ? 1e-3 * mean : 1e-3;
    s.rho[i] = rho;
    if (!(mid >= floor)) {
      s.sigma[i] = floor;
      s.clamped[i] = 1;
    } else {
      s.sigma[i] = mid;
    }
  });
  return s;
}

FuzzyGraph fuzzy_graph(const knn::NeighborGraph& g, const SmoothKnn& s) {
  const std::size_t n = g.n, k = g.k;
  std::vector<linalg::Triplet> directed;
  directed.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double v = std::exp(-std::max(0.0, g.dists(i)[j] - s.rho[i]) / s.sigma[i]);
      directed.push_back({static_cast<std::uint32_t>(i), g.neighbors(i)[j], v});
    }
  const linalg::CsrMatrix dir = linalg::from_triplets(n, directed);
  auto lookup = [&](std::uint32_t i, std::uint32_t j) {
    const auto begin = dir.col.begin() + static_cast<std::ptrdiff_t>(dir.row_ptr[i]);
    const auto end = dir.col.begin() + static_cast<std::ptrdiff_t>(dir.row_ptr[i + 1]);
    const auto it = std::lower_bound(begin, end, j);
    return it != end && *it == j ? std::optional<double>(dir.val[static_cast<std::size_t>(it - dir.col.begin())]) : std::nullopt;
  };
  std::vector<linalg::Triplet> sym;
  sym.reserve(2 * dir.nnz());
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::size_t e = dir.row_ptr[i]; e < dir.row_ptr[i + 1]; ++e) {
      const std::uint32_t j = dir.col[e];
      const std::optional<double> vji = lookup(j, i);
      // Each unordered pair is emitted once from its lower endpoint, or from
      // the only endpoint that lists the other.
      if (vji && j < i) continue;
      const double w = fuzzy_union(dir.val[e], vji.value_or(0.0));
      if (w <= 0.0) continue;
      sym.push_back({i, j, w});
      sym.push_back({j, i, w});
    }
  FuzzyGraph fg;
  fg.n = n;
  fg.weights = linalg::from_triplets(n, std::move(sym));
  fg.rho = s.rho;
  fg.sigma = s.sigma;
  return fg;
}

CurveParams fit_curve(double min_dist, double spread) {
  require(min_dist >= 0.0, Errc::invalid_argument, "min_dist must be >= 0");
  require(spread > 0.0, Errc::invalid_argument, "spread must be > 0");
  constexpr int kSamples = 300;
  Eigen::VectorXd x(kSamples), target(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    x(i) = 3.0 * spread * i / (kSamples - 1);
    target(i) = x(i) <= min_dist ? 1.0 : std::exp(-(x(i) - min_dist) / spread);
  }
  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int i = 0; i < kSamples; ++i) r(i) = 1.0 / (1.0 + p(0) * std::pow(x(i), 2.0 * p(1))) - target(i);
  };
  auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
    for (int i = 0; i < kSamples; ++i) {
      if (x(i) == 0.0) {
        j(i, 0) = j(i, 1) = 0.0;
        continue;
      }
      const double xp = std::pow(x(i), 2.0 * p(1));
      const double den = 1.0 + p(0) * xp;
      j(i, 0) = -xp / (den * den);
      j(i, 1) = -p(0) * xp * 2.0 * std::log(x(i)) / (den * den);
    }
  };
  Eigen::VectorXd p0(2);
  p0 << 1.0, 1.0;
  const linalg::LmResult fit = linalg::levenberg_marquardt(kSamples, residual, jacobian, p0, 1e-14, 5000);
  require(fit.x.allFinite() && fit.x(0) > 0.0 && fit.x(1) > 0.0, Errc::numerical, "curve fit diverged");
  return {fit.x(0), fit.x(1)};
}

DisconnectedInit parse_disconnected_init(const std::string& text) {
  if (text == "random") return DisconnectedInit::random;
  if (text == "component" || text == "per_component") return DisconnectedInit::per_component;
  fail(Errc::invalid_argument, fmt::format("unknown disconnected-graph init '{}' (random, component)", text));
}

std::string disconnected_init_name(DisconnectedInit m) {
  return m == DisconnectedInit::random ? "random" : "component";
}

namespace {

// Spectral coordinates of one connected graph scaled to max |coordinate| = radius.
// Returns false when the graph is too small for d nontrivial eigenvectors.
bool spectral_layout(const linalg::CsrMatrix& w, std::size_t d, double radius, std::uint64_t seed,
                     std::vector<double>& out) {
  const std::size_t n = w.n;
  if (n <= d + 1) return false;
  const linalg::EigenPairs eig = linalg::largest_eigenpairs(linalg::normalized_adjacency(w), d + 1, seed);
  // Column 0 is the trivial eigenvector D^{1/2} 1.
  double max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      max_abs = std::max(max_abs, std::abs(eig.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1))));
  const double scale = max_abs > 0.0 ? radius / max_abs : 1.0;
  out.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] = scale * eig.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1));
  return true;
}

}  // namespace

Embedding init_embedding(const FuzzyGraph& fg, std::size_t d, std::uint64_t seed, InitInfo* info,
                         DisconnectedInit mode) {
  const std::size_t n = fg.n;
  Rng rng(seed);
  const linalg::Components comp = linalg::connected_components(fg.weights);
  Embedding y(n, d);
  InitInfo local;
  local.components = comp.count;
  std::normal_distribution<double> jitter(0.0, 1e-4);
  std::vector<double> layout;
  if (comp.count == 1 && spectral_layout(fg.weights, d, 10.0, derive_seed(seed, 1), layout)) {
    for (std::size_t i = 0; i < n * d; ++i) y.coords[i] = layout[i] + jitter(rng);
    local.spectral = true;
  } else if (comp.count > 1 && mode == DisconnectedInit::per_component) {
    spdlog::warn("fuzzy graph has {} connected components; laying out each component separately", comp.count);
    // Grid cells of side 20 / per_axis, visited in a seeded order.
    std::size_t per_axis = 1;
    while (static_cast<std::size_t>(std::pow(static_cast<double>(per_axis), static_cast<double>(d))) < comp.count) ++per_axis;
    const double cell = 20.0 / static_cast<double>(per_axis);
    const double radius = 0.4 * cell;
    std::size_t cells = 1;
    for (std::size_t c = 0; c < d; ++c) cells *= per_axis;
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::uint32_t>> members(comp.count);
    for (std::size_t i = 0; i < n; ++i) members[comp.label[i]].push_back(static_cast<std::uint32_t>(i));
    std::vector<std::uint32_t> local_id(n);
    std::uniform_real_distribution<double> u(-radius, radius);
    for (std::size_t c = 0; c < comp.count; ++c) {
      const auto& m = members[c];
      for (std::size_t t = 0; t < m.size(); ++t) local_id[m[t]] = static_cast<std::uint32_t>(t);
      std::vector<linalg::Triplet> entries;
      for (std::uint32_t i : m)
        for (std::size_t e = fg.weights.row_ptr[i]; e < fg.weights.row_ptr[i + 1]; ++e)
          entries.push_back({local_id[i], local_id[fg.weights.col[e]], fg.weights.val[e]});
      const linalg::CsrMatrix sub = linalg::from_triplets(m.size(), std::move(entries));
      const bool spectral = spectral_layout(sub, d, radius, derive_seed(seed, 2 + c), layout);
      std::size_t rest = order[c];
      for (std::size_t k = 0; k < d; ++k) {
        const double center = -10.0 + cell * (static_cast<double>(rest % per_axis) + 0.5);
        rest /= per_axis;
        for (std::size_t t = 0; t < m.size(); ++t)
          y.at(m[t], k) = center + (spectral ? layout[t * d + k] + jitter(rng) : u(rng));
      }
    }
    local.spectral = true;
  } else {
    if (comp.count > 1)
      spdlog::warn("fuzzy graph has {} connected components; using random initialization", comp.count);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (double& v : y.coords) v = u(rng);
  }
  if (info) *info = local;
  return y;
}

double attractive_coefficient(double d2, double a, double b) {
  if (d2 <= 0.0) return 0.0;
  return -2.0 * a * b * std::pow(d2, b - 1.0) / (1.0 + a * std::pow(d2, b));
}

double repulsive_coefficient(double d2, double a, double b, double eps) {
  if (d2 <= 0.0) return 0.0;
  return 2.0 * b / ((eps + d2) * (1.0 + a * std::pow(d2, b)));
}

double attractive_loss(double d2, double a, double b) { return std::log1p(a * std::pow(d2, b)); }

double repulsive_loss(double d2, double a, double b) {
  const double phi = 1.0 / (1.0 + a * std::pow(d2, b));
  return -std::log(std::max(1e-300, 1.0 - phi));
}

Embedding optimize(const FuzzyGraph& fg, Embedding y, const UmapParams& params, const OptimizeOptions& options) {
  params.validate();
  require(y.n == fg.n, Errc::shape, fmt::format("initial embedding has {} points, graph has {}", y.n, fg.n));
  const std::size_t n = fg.n, dim = y.d;
  const std::size_t epochs = params.resolved_epochs(n);
  CurveParams curve{params.a, params.b};
  if (curve.a == 0.0) curve = fit_curve(params.min_dist, params.spread);
  const double a = curve.a, b = curve.b;

  // Directed edge list over both orientations of every symmetric entry.
  const auto& w = fg.weights;
  const double w_max = w.nnz() ? *std::max_element(w.val.begin(), w.val.end()) : 0.0;
  std::vector<std::uint32_t> head, tail;
  std::vector<double> period;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::size_t e = w.row_ptr[i]; e < w.row_ptr[i + 1]; ++e) {
      // Edges too weak to be sampled once over the run are dropped.
      if (w.val[e] < w_max / static_cast<double>(epochs)) continue;
      head.push_back(i);
      tail.push_back(w.col[e]);
      period.push_back(w_max / w.val[e]);
    }
  const std::size_t edges = head.size();
  std::vector<double> next_sample = period;

  double* coords = y.coords.data();
  auto update_edge = [&](std::size_t e, double alpha, Rng& rng, auto&& write) {
    const std::uint32_t i = head[e], j = tail[e];
    double* yi = coords + static_cast<std::size_t>(i) * dim;
    double* yj = coords + static_cast<std::size_t>(j) * dim;
    if (options.attract) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (yi[c] - yj[c]) * (yi[c] - yj[c]);
      const double coef = attractive_coefficient(d2, a, b);
      for (std::size_t c = 0; c < dim; ++c) {
        const double g = clip(coef * (yi[c] - yj[c])) * alpha;
        write(yi + c, yi[c] + g);
        write(yj + c, yj[c] - g);
      }
    }
    for (std::size_t s = 0; s < params.negative_sample_rate; ++s) {
      const std::uint32_t k = draw_index(rng, n);
      if (k == i) continue;
      const double* yk = coords + static_cast<std::size_t>(k) * dim;
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (yi[c] - yk[c]) * (yi[c] - yk[c]);
      const double coef = repulsive_coefficient(d2, a, b);
      if (coef <= 0.0) continue;
      for (std::size_t c = 0; c < dim; ++c) write(yi + c, yi[c] + clip(coef * (yi[c] - yk[c])) * alpha);
    }
  };

  const std::uint64_t sgd_seed = derive_seed(params.seed, kStreamSgd);
  const unsigned threads = params.parallel_sgd ? resolve_threads(params.threads) : 1;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double alpha = params.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(epochs));
    const double now = static_cast<double>(epoch);
    if (threads <= 1) {
      Rng rng(derive_seed(sgd_seed, epoch));
      auto plain = [](double* p, double v) { *p = v; };
      for (std::size_t e = 0; e < edges; ++e) {
        if (next_sample[e] > now + 1.0) continue;
        update_edge(e, alpha, rng, plain);
        next_sample[e] += period[e];
      }
    } else {
      auto relaxed = [](double* p, double v) { std::atomic_ref<double>(*p).store(v, std::memory_order_relaxed); };
      const std::size_t chunk = (edges + threads - 1) / threads;
      parallel_for(threads, threads, [&](std::size_t t) {
        Rng rng(derive_seed(sgd_seed, epoch * threads + t));
        const std::size_t end = std::min(edges, (t + 1) * chunk);
        for (std::size_t e = t * chunk; e < end; ++e) {
          if (next_sample[e] > now + 1.0) continue;
          update_edge(e, alpha, rng, relaxed);
          next_sample[e] += period[e];
        }
      });
    }
    if (!y.all_finite()) fail(Errc::numerical, fmt::format("non-finite embedding coordinate after epoch {}", epoch + 1));
    if (options.on_epoch) options.on_epoch(epoch + 1, y);
  }
  return y;
}

knn::NeighborGraph build_graph(PointsView data, const UmapParams& params) {
  params.validate();
  require(data.n >= params.n_neighbors + 1, Errc::invalid_argument,
          fmt::format("need at least n_neighbors + 1 = {} points, got {}", params.n_neighbors + 1, data.n));
  const bool exact = params.knn == KnnMethod::exact || (params.knn == KnnMethod::automatic && data.n <= kExactKnnLimit);
  if (exact) return knn::knn_brute(data, params.n_neighbors, params.threads);
  return knn::knn_approximate(data, params.n_neighbors, derive_seed(params.seed, kStreamKnn), params.threads);
}

Embedding embed_graph(const knn::NeighborGraph& g, const UmapParams& params, FuzzyGraph* fg_out, const Embedding* init) {
  const SmoothKnn s = smooth_knn(g, 0.0, params.threads);
  FuzzyGraph fg = fuzzy_graph(g, s);
  Embedding y0;
  if (init) {
    require(init->n == g.n && init->d == params.d, Errc::shape, "initial layout does not match the graph");
    y0 = *init;
  } else {
    y0 = init_embedding(fg, params.d, derive_seed(params.seed, kStreamInit), nullptr, params.disconnected_init);
  }
  Embedding y = optimize(fg, std::move(y0), params);
  if (fg_out) *fg_out = std::move(fg);
  return y;
}

Embedding umap(PointsView data, const UmapParams& params) { return embed_graph(build_graph(data, params), params); }

Embedding bootstrap(const Embedding& y, const UmapParams& params, std::size_t rounds) {
  require(rounds >= 1, Errc::invalid_argument, "bootstrap rounds must be >= 1");
  Embedding current = y;
  UmapParams p = params;
  for (std::size_t r = 0; r < rounds; ++r) {
    const knn::NeighborGraph g = build_graph(current.view(), p);
    if (p.bootstrap_from_previous && current.d == p.d) {
      const Embedding start = current;
      current = embed_graph(g, p, nullptr, &start);
    } else {
      current = embed_graph(g, p);
    }
    p.seed = chain_seed(p.seed);
  }
  return current;
}

LossSample sample_loss_terms(const FuzzyGraph& fg, std::size_t edge_count, std::size_t negative_count, std::uint64_t seed) {
  Rng rng(seed);
  LossSample s;
  const auto& w = fg.weights;
  if (w.nnz() > 0) {
    for (std::size_t t = 0; t < edge_count; ++t) {
      const std::size_t e = draw_index(rng, w.nnz());
      const auto row = std::upper_bound(w.row_ptr.begin(), w.row_ptr.end(), e) - w.row_ptr.begin() - 1;
      s.edges.emplace_back(static_cast<std::uint32_t>(row), w.col[e]);
      s.weights.push_back(w.val[e]);
    }
  }
  for (std::size_t t = 0; t < negative_count; ++t) {
    const std::uint32_t i = draw_index(rng, fg.n);
    std::uint32_t j = draw_index(rng, fg.n);
    if (j == i) j = (j + 1) % static_cast<std::uint32_t>(fg.n);
    s.negatives.emplace_back(i, j);
  }
  return s;
}

double sampled_cross_entropy(const LossSample& s, const Embedding& y, double a, double b) {
  auto d2 = [&](std::uint32_t i, std::uint32_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < y.d; ++c) acc += (y.at(i, c) - y.at(j, c)) * (y.at(i, c) - y.at(j, c));
    return acc;
  };
  double loss = 0.0;
  for (std::size_t t = 0; t < s.edges.size(); ++t) loss += s.weights[t] * attractive_loss(d2(s.edges[t].first, s.edges[t].second), a, b);
  for (const auto& [i, j] : s.negatives) loss += repulsive_loss(d2(i, j) + 1e-3, a, b);
  return loss;
}

}  // namespace stemml::umap
