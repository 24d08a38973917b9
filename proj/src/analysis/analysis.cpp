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

#include "stemml/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"
#include "stemml/core/parallel.hpp"

namespace stemml::analysis {

SpatialMap to_map(std::vector<double> values, ScanShape shape) {
  require(values.size() == shape.size(), Errc::shape,
          fmt::format("{} values do not fill a {}x{} scan", values.size(), shape.ny, shape.nx));
  return {shape.ny, shape.nx, std::move(values)};
}

SpatialMap spatial_map(const std::vector<int>& labels, ScanShape shape) {
  std::vector<double> v(labels.begin(), labels.end());
  for (double& x : v) x = std::max(x, -1.0);
  return to_map(std::move(v), shape);
}

const ClusterEntry* ClusterStats::find(int label) const {
  for (const auto& c : clusters)
    if (c.label == label) return &c;
  return nullptr;
}

ClusterEntry selection_stats(const FlatDataset& data, const std::vector<std::size_t>& rows) {
  require(!rows.empty(), Errc::invalid_argument, "selection is empty");
  const std::size_t p = data.p();
  std::vector<std::uint8_t> seen(data.n(), 0);
  for (std::size_t r : rows) {
    require(r < data.n(), Errc::not_found, fmt::format("point {} out of range [0, {})", r, data.n()));
    require(!seen[r], Errc::invalid_argument, fmt::format("point {} selected twice", r));
    seen[r] = 1;
  }
  ClusterEntry e;
  e.count = rows.size();
  e.mean.assign(p, 0.0);
  e.std.assign(p, 0.0);
  for (std::size_t r : rows) {
    const auto x = data.row(r);
    for (std::size_t j = 0; j < p; ++j) e.mean[j] += x[j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& m : e.mean) m *= inv;
  for (std::size_t r : rows) {
    const auto x = data.row(r);
    for (std::size_t j = 0; j < p; ++j) {
      const double d = x[j] - e.mean[j];
      e.std[j] += d * d;
    }
  }
  for (double& s : e.std) s = std::sqrt(s * inv);
  return e;
}

ClusterStats cluster_stats(const FlatDataset& data, const std::vector<int>& labels) {
  require(labels.size() == data.n(), Errc::shape,
          fmt::format("{} labels for {} points", labels.size(), data.n()));
  std::map<int, std::vector<std::size_t>> members;
  ClusterStats s;
  s.p = data.p();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      ++s.noise;
      continue;
    }
    members[labels[i]].push_back(i);
  }
  if (!members.empty()) {
    const int top = members.rbegin()->first;
    for (int l = 0; l < top; ++l)
      if (!members.count(l)) spdlog::warn("cluster id {} has no members; skipped", l);
  }
  for (const auto& [label, rows] : members) {
    ClusterEntry e = selection_stats(data, rows);
    e.label = label;
    s.clusters.push_back(std::move(e));
  }
  return s;
}

SpatialMap similarity_loading(const FlatDataset& data, const std::vector<double>& reference, double eps) {
  require(reference.size() == data.p(), Errc::shape,
          fmt::format("reference has {} pixels, frames have {}", reference.size(), data.p()));
  require(eps > 0.0, Errc::invalid_argument, "eps must be > 0");
  std::vector<double> v(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto x = data.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - reference[j];
      s += d * d;
    }
    v[i] = 1.0 / (eps + std::sqrt(s));
  }
  return to_map(std::move(v), data.scan_shape());
}

std::vector<std::vector<double>> mean_subtracted(const ClusterStats& stats, const std::vector<double>& global_mean) {
  require(global_mean.size() == stats.p, Errc::shape,
          fmt::format("global mean has {} pixels, clusters have {}", global_mean.size(), stats.p));
  std::vector<std::vector<double>> out;
  for (const auto& c : stats.clusters) {
    std::vector<double> d(stats.p);
    for (std::size_t j = 0; j < stats.p; ++j) d[j] = c.mean[j] - global_mean[j];
    out.push_back(std::move(d));
  }
  return out;
}

VirtualImage virtual_haadf(const ScanGrid4D& g, double inner, double outer,
                           std::optional<std::pair<double, double>> center) {
  require(inner >= 0.0 && inner < outer, Errc::invalid_argument,
          fmt::format("annulus needs 0 <= inner < outer (got {}, {})", inner, outer));
  VirtualImage out;
  out.mask.inner = inner;
  out.mask.outer = outer;
  out.mask.cy = center ? center->first : 0.5 * (static_cast<double>(g.ky()) - 1.0);
  out.mask.cx = center ? center->second : 0.5 * (static_cast<double>(g.kx()) - 1.0);
  std::vector<std::size_t> pixels;
  for (std::size_t qy = 0; qy < g.ky(); ++qy)
    for (std::size_t qx = 0; qx < g.kx(); ++qx) {
      const double r = std::hypot(static_cast<double>(qy) - out.mask.cy, static_cast<double>(qx) - out.mask.cx);
      if (r >= inner && r < outer) pixels.push_back(qy * g.kx() + qx);
    }
  require(!pixels.empty(), Errc::invalid_argument,
          fmt::format("annulus [{}, {}) contains no detector pixels", inner, outer));
  out.mask.pixels = pixels.size();
  std::vector<double> v(g.frame_count());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto f = g.frame(i);
    double s = 0.0;
    for (std::size_t q : pixels) s += f[q];
    v[i] = s;
  }
  out.map = to_map(std::move(v), g.scan_shape());
  return out;
}

DeflectionField com_map(const ScanGrid4D& g, CenterMode mode, unsigned threads) {
  const std::size_t n = g.frame_count(), ky = g.ky(), kx = g.kx();
  DeflectionField f;
  f.ny = g.ny();
  f.nx = g.nx();
  std::vector<double> sy(n, 0.0), sx(n, 0.0), mass(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto fr = g.frame(i);
    double m = 0.0, y = 0.0, x = 0.0;
    for (std::size_t qy = 0; qy < ky; ++qy) {
      double row = 0.0, rx = 0.0;
      for (std::size_t qx = 0; qx < kx; ++qx) {
        const double v = fr[qy * kx + qx];
        row += v;
        rx += v * static_cast<double>(qx);
      }
      m += row;
      y += row * static_cast<double>(qy);
      x += rx;
    }
    mass[i] = m;
    sy[i] = m != 0.0 ? y / m : 0.0;
    sx[i] = m != 0.0 ? x / m : 0.0;
  });
  if (mode == CenterMode::geometric) {
    f.cy = 0.5 * (static_cast<double>(ky) - 1.0);
    f.cx = 0.5 * (static_cast<double>(kx) - 1.0);
  } else {
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mass[i] != 0.0) {
        f.cy += sy[i];
        f.cx += sx[i];
        ++used;
      }
    if (used) {
      f.cy /= static_cast<double>(used);
      f.cx /= static_cast<double>(used);
    }
  }
  f.dy.assign(n, 0.0);
  f.dx.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (mass[i] != 0.0) {
      f.dy[i] = sy[i] - f.cy;
      f.dx[i] = sx[i] - f.cx;
    }
  return f;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, Errc::shape, "pearson needs equal lengths >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  require(saa > 0.0 && sbb > 0.0, Errc::numerical, "pearson of a constant vector is undefined");
  return sab / std::sqrt(saa * sbb);
}

std::vector<int> majority_mapping(const std::vector<int>& predicted, const std::vector<int>& truth) {
  require(predicted.size() == truth.size(), Errc::shape, "label vectors differ in length");
  int top = -1;
  for (int l : predicted) top = std::max(top, l);
  std::vector<std::map<int, std::size_t>> votes(static_cast<std::size_t>(top + 1));
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] >= 0) ++votes[static_cast<std::size_t>(predicted[i])][truth[i]];
  std::vector<int> out(votes.size(), -1);
  for (std::size_t c = 0; c < votes.size(); ++c) {
    std::size_t best = 0;
    for (const auto& [t, count] : votes[c])
      if (count > best) {
        best = count;
        out[c] = t;
      }
  }
  return out;
}

StabilityReport rerun_stability(const LabelRun& run, const std::vector<std::uint64_t>& seeds, bool exclude_noise) {
  require(seeds.size() >= 2, Errc::invalid_argument, "stability needs at least 2 reruns");
  StabilityReport r;
  r.seeds = seeds;
  for (std::uint64_t s : seeds) r.labels.push_back(run(s));
  const std::size_t m = seeds.size();
  r.ari.assign(m * m, 1.0);
  std::vector<double> off;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = cluster::adjusted_rand_index(r.labels[i], r.labels[j], exclude_noise);
      r.ari[i * m + j] = r.ari[j * m + i] = v;
      off.push_back(v);
    }
  std::sort(off.begin(), off.end());
  r.min = off.front();
  const std::size_t h = off.size() / 2;
  r.median = off.size() % 2 ? off[h] : 0.5 * (off[h - 1] + off[h]);
  return r;
}

}  // namespace stemml::analysis
