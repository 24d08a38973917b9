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
#include <functional>
#include <string>
#include <vector>

#include "stemml/core/points.hpp"
#include "stemml/knn/knn.hpp"
#include "stemml/linalg/sparse.hpp"

namespace stemml::umap {

enum class KnnMethod { automatic, exact, nndescent };
KnnMethod parse_knn_method(const std::string& text);
std::string knn_method_name(KnnMethod m);

/// Layout for disconnected fuzzy graphs: uniform random, or a spectral layout
/// per component placed in its own cell of a grid over [-10, 10]^d.
enum class DisconnectedInit { random, per_component };
DisconnectedInit parse_disconnected_init(const std::string& text);
std::string disconnected_init_name(DisconnectedInit m);

struct UmapParams {
  std::size_t n_neighbors = 50;
  double min_dist = 0.0;
  double spread = 1.0;
  std::size_t d = 2;
  std::size_t n_epochs = 0;  ///< 0 selects by dataset size
  std::size_t negative_sample_rate = 5;
  double learning_rate = 1.0;
  double a = 0.0, b = 0.0;  ///< both 0 selects fit_curve(min_dist, spread)
  std::uint64_t seed = 0;
  KnnMethod knn = KnnMethod::automatic;
  unsigned threads = 1;
  bool parallel_sgd = false;  ///< unsynchronized updates; not reproducible
  bool bootstrap_from_previous = true;  ///< bootstrap rounds start from the incoming layout
  DisconnectedInit disconnected_init = DisconnectedInit::per_component;

  void validate() const;
  std::size_t resolved_epochs(std::size_t n) const;
};

/// Largest n for which KnnMethod::automatic uses the exact graph.
inline constexpr std::size_t kExactKnnLimit = 16384;

struct SmoothKnn {
  std::vector<double> rho;
  std::vector<double> sigma;
  std::vector<std::uint8_t> clamped;  ///< sigma raised to its floor
};

/// rho_i is the smallest positive neighbor distance; sigma_i solves
/// sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = target. A target <= 0 selects log2(k).
SmoothKnn smooth_knn(const knn::NeighborGraph& g, double target = 0.0, unsigned threads = 1);

/// Symmetric weights in (0, 1] under the fuzzy union of directed memberships.
struct FuzzyGraph {
  std::size_t n = 0;
  linalg::CsrMatrix weights;
  std::vector<double> rho;
  std::vector<double> sigma;
};

FuzzyGraph fuzzy_graph(const knn::NeighborGraph& g, const SmoothKnn& s);
/// a + b - ab, evaluated so that a union with 1 is exactly 1.
inline double fuzzy_union(double a, double b) {
  const double hi = a > b ? a : b, lo = a > b ? b : a;
  return hi + lo * (1.0 - hi);
}

struct CurveParams {
  double a = 0.0;
  double b = 0.0;
};
/// Least-squares fit of 1 / (1 + a x^(2b)) to the min_dist/spread target on 300
/// points in [0, 3 spread].
CurveParams fit_curve(double min_dist, double spread = 1.0);

struct InitInfo {
  bool spectral = false;
  std::size_t components = 0;
};
/// Spectral layout scaled to max |coordinate| = 10 plus 1e-4 jitter; disconnected
/// graphs log a warning and use the layout chosen by mode.
Embedding init_embedding(const FuzzyGraph& fg, std::size_t d, std::uint64_t seed, InitInfo* info = nullptr,
                         DisconnectedInit mode = DisconnectedInit::random);

/// Per-pair gradient scalings along (y_i - y_j) used by the SGD updates.
double attractive_coefficient(double d2, double a, double b);
double repulsive_coefficient(double d2, double a, double b, double eps = 1e-3);
/// Cross-entropy terms: -log(phi) and -log(1 - phi) as functions of squared distance.
double attractive_loss(double d2, double a, double b);
double repulsive_loss(double d2, double a, double b);

struct OptimizeOptions {
  bool attract = true;  ///< false isolates the repulsive term
  std::function<void(std::size_t epoch, const Embedding& y)> on_epoch;
};

/// SGD over the fuzzy graph. Throws Errc::numerical naming the epoch when a
/// coordinate becomes non-finite.
Embedding optimize(const FuzzyGraph& fg, Embedding y0, const UmapParams& params, const OptimizeOptions& options = {});

knn::NeighborGraph build_graph(PointsView data, const UmapParams& params);
/// Graph from build_graph through optimize. fg_out, when given, receives the graph.
Embedding embed_graph(const knn::NeighborGraph& g, const UmapParams& params, FuzzyGraph* fg_out = nullptr,
                      const Embedding* init = nullptr);
Embedding umap(PointsView data, const UmapParams& params);

/// Rebuilds the kNN graph on y and re-embeds, rounds times; round r uses the
/// seed chained r times from params.seed. Each round starts from the incoming
/// layout rescaled to max |coordinate| = 10 unless bootstrap_from_previous is
/// false, in which case init_embedding is used.
Embedding bootstrap(const Embedding& y, const UmapParams& params, std::size_t rounds = 1);

struct LossSample {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<double> weights;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> negatives;
};
LossSample sample_loss_terms(const FuzzyGraph& fg, std::size_t edge_count, std::size_t negative_count, std::uint64_t seed);
double sampled_cross_entropy(const LossSample& s, const Embedding& y, double a, double b);

}  // namespace stemml::umap
