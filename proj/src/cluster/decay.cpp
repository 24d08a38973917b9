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

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"
#include "stemml/core/parallel.hpp"
#include "stemml/linalg/lm.hpp"

namespace stemml::cluster {

namespace {

constexpr double kTauStep = 0.25;

struct LinearFit {
  double C = 0.0, b = 0.0, sse = std::numeric_limits<double>::infinity();
};

// Least squares for (C, b) with tau fixed.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y, double tau) {
  const double m = static_cast<double>(x.size());
  double se = 0.0, see = 0.0, sy = 0.0, sey = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double e = std::exp(-x[t] / tau);
    se += e;
    see += e * e;
    sy += y[t];
    sey += e * y[t];
  }
  const double det = m * see - se * se;
  LinearFit f;
  if (std::abs(det) < 1e-300) return f;
  f.C = (m * sey - se * sy) / det;
  f.b = (see * sy - se * sey) / det;
  f.sse = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double r = f.C * std::exp(-x[t] / tau) + f.b - y[t];
    f.sse += r * r;
  }
  return f;
}

}  // namespace

DecayFit fit_decay(std::size_t k_min, const std::vector<double>& counts) {
  require(counts.size() >= 3, Errc::invalid_argument, "decay fit needs at least 3 k values");
  for (double c : counts) require(std::isfinite(c), Errc::numerical, "cluster counts must be finite");
  DecayFit fit;
  fit.k_min = k_min;
  fit.k_max = k_min + counts.size() - 1;
  fit.counts = counts;
  for (std::size_t t = 0; t < counts.size(); ++t) fit.ks.push_back(k_min + t);

  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo == *hi) {
    fit.degenerate = true;
    fit.b = *lo;
    fit.k_star = k_min;
    spdlog::warn("cluster count is constant ({}) over k = {}..{}; decay constant is unidentifiable", *lo, k_min, fit.k_max);
    return fit;
  }

  const double range = static_cast<double>(fit.k_max - k_min);
  std::vector<double> x(counts.size());
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = static_cast<double>(t);

  double best_tau = kTauStep;
  LinearFit best;
  for (double tau = kTauStep; tau <= range + 1e-12; tau += kTauStep) {
    const LinearFit f = fit_linear(x, counts, tau);
    if (f.sse < best.sse) {
      best = f;
      best_tau = tau;
    }
  }

  const auto m = static_cast<int>(x.size());
  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int t = 0; t < m; ++t) r[t] = p[0] * std::exp(-x[t] / p[1]) + p[2] - counts[t];
  };
  auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
    for (int t = 0; t < m; ++t) {
      const double e = std::exp(-x[t] / p[1]);
      j(t, 0) = e;
      j(t, 1) = p[0] * e * x[t] / (p[1] * p[1]);
      j(t, 2) = 1.0;
    }
  };
  fit.C = best.C;
  fit.tau = best_tau;
  fit.b = best.b;
  const linalg::LmResult lm = linalg::levenberg_marquardt(m, residual, jacobian, Eigen::Vector3d(best.C, best_tau, best.b));
  const double tau_lm = lm.x[1];
  if (lm.x.allFinite() && tau_lm > 0.0 && tau_lm <= range && lm.squared_error <= best.sse) {
    fit.C = lm.x[0];
    fit.tau = tau_lm;
    fit.b = lm.x[2];
  }
  const auto steps = static_cast<std::size_t>(std::ceil(3.0 * fit.tau - 1e-9));
  fit.k_star = std::min(k_min + steps, fit.k_max);
  return fit;
}

DecayFit select_k(PointsView data, std::size_t k_min, std::size_t k_max, unsigned threads) {
  require(k_min >= 2 && k_min <= k_max, Errc::invalid_argument, fmt::format("invalid k range [{}, {}]", k_min, k_max));
  require(k_max < data.n, Errc::invalid_argument, fmt::format("k_max = {} must be below n = {}", k_max, data.n));
  const knn::NeighborGraph g = core_graph(data, k_max, threads);
  std::vector<double> counts(k_max - k_min + 1);
  parallel_for(counts.size(), threads, [&](std::size_t t) {
    const std::size_t k = k_min + t;
    const CoreDistances cores = core_distances(g, k);
    counts[t] = static_cast<double>(extract_eom(condense(mst_mreach(data, cores), data.n, k)).n_clusters);
  });
  return fit_decay(k_min, counts);
}

}  // namespace stemml::cluster
