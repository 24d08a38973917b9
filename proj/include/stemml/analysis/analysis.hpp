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
#include <optional>
#include <vector>

#include "stemml/io/dataset.hpp"

namespace stemml::analysis {

/// Per-scan-pixel scalar, row-major over (iy, ix).
struct SpatialMap {
  std::size_t ny = 0, nx = 0;
  std::vector<double> values;

  double at(std::size_t iy, std::size_t ix) const { return values[iy * nx + ix]; }
};

/// Labels reshaped through the row index bijection; noise stays -1.
SpatialMap spatial_map(const std::vector<int>& labels, ScanShape shape);
SpatialMap to_map(std::vector<double> values, ScanShape shape);

struct ClusterEntry {
  int label = 0;
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> std;  ///< population standard deviation
};
struct ClusterStats {
  std::size_t p = 0;
  std::vector<ClusterEntry> clusters;  ///< ascending label, empty labels skipped
  std::size_t noise = 0;

  const ClusterEntry* find(int label) const;
};

/// Two-pass mean and population std per detector pixel over member frames.
ClusterStats cluster_stats(const FlatDataset& data, const std::vector<int>& labels);
/// Same for one explicit member set; rows must be distinct and in range.
ClusterEntry selection_stats(const FlatDataset& data, const std::vector<std::size_t>& rows);

/// 1 / (eps + ||x_i - reference||) per scan pixel.
SpatialMap similarity_loading(const FlatDataset& data, const std::vector<double>& reference, double eps = 1e-12);

/// mean_c - global_mean per cluster, in the order of stats.clusters.
std::vector<std::vector<double>> mean_subtracted(const ClusterStats& stats, const std::vector<double>& global_mean);

struct AnnularMask {
  double inner = 0.0;
  double outer = 0.0;
  double cy = 0.0, cx = 0.0;
  std::size_t pixels = 0;
};
struct VirtualImage {
  SpatialMap map;
  AnnularMask mask;
};
/// Sums pixels with inner <= r < outer, r measured from pixel centers to the
/// center (detector midpoint by default). outer may be infinity.
VirtualImage virtual_haadf(const ScanGrid4D& g, double inner, double outer,
                           std::optional<std::pair<double, double>> center = std::nullopt);

enum class CenterMode { geometric, mean_centroid };
struct DeflectionField {
  std::size_t ny = 0, nx = 0;
  std::vector<double> dy, dx;  ///< detector pixels
  double cy = 0.0, cx = 0.0;   ///< reference center
};
/// Intensity centroid minus the reference center; zero-sum frames give (0, 0).
DeflectionField com_map(const ScanGrid4D& g, CenterMode mode = CenterMode::geometric, unsigned threads = 1);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Majority truth label for every predicted label (noise maps to -1).
std::vector<int> majority_mapping(const std::vector<int>& predicted, const std::vector<int>& truth);

struct StabilityReport {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<int>> labels;
  std::vector<double> ari;  ///< runs x runs, row-major, unit diagonal
  double min = 0.0, median = 0.0;
};
using LabelRun = std::function<std::vector<int>(std::uint64_t seed)>;
/// Runs once per seed and compares every pair of labelings with the ARI.
StabilityReport rerun_stability(const LabelRun& run, const std::vector<std::uint64_t>& seeds, bool exclude_noise = false);

}  // namespace stemml::analysis
