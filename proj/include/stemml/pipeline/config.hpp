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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stemml/analysis/analysis.hpp"
#include "stemml/io/dataset.hpp"
#include "stemml/synth/synth.hpp"
#include "stemml/umap/umap.hpp"

namespace stemml::pipeline {

enum class ClusterMode { hdbscan, spectral };
ClusterMode parse_cluster_mode(const std::string& text);
std::string cluster_mode_name(ClusterMode m);

/// Every resolved parameter of a run. The synth section is only read by generate.
struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path outdir = ".";
  std::uint64_t seed = 0;
  unsigned threads = 0;  ///< 0 selects the number of logical cores
  AxisOrder axes = kCanonicalAxes;
  bool normalize = false;

  synth::SynthConfig synth;

  umap::UmapParams umap;
  std::size_t bootstrap_rounds = 0;

  ClusterMode mode = ClusterMode::hdbscan;
  std::size_t min_cluster_size = 86;
  std::size_t n_clusters = 7;
  std::size_t spectral_neighbors = 50;
  bool auto_k = false;  ///< hdbscan only: choose min_cluster_size with select_k
  std::size_t k_min = 20, k_max = 149;

  double haadf_inner = 0.0;  ///< <= 0 selects a quarter of the smaller detector extent
  double haadf_outer = 0.0;  ///< <= 0 selects no outer bound
  analysis::CenterMode center = analysis::CenterMode::geometric;
  std::optional<double> vmin, vmax;

  std::size_t reruns = 5;
  bool stability_exclude_noise = true;

  /// Throws Errc::invalid_argument naming the violated invariant.
  void validate() const;
  unsigned resolved_threads() const;
  /// Stage parameters with the run seed and thread count applied.
  umap::UmapParams resolved_umap() const;
};

/// Flat "section.key" -> value view of a config, in a fixed key order.
using Settings = std::vector<std::pair<std::string, std::string>>;

Settings to_settings(const RunConfig& cfg);
/// Unknown keys and unparsable values throw Errc::invalid_argument.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_settings(RunConfig& cfg, const Settings& settings);

/// INI file with sections; sections named "stage.*" or "result" are skipped so
/// a run manifest can be fed back as a config.
Settings read_ini(const std::filesystem::path& path);
RunConfig load_config(const std::filesystem::path& path);

/// manifest.ini in the run directory: the resolved config plus one section per
/// stage. Writes go through a temporary file and a rename.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  void set_config(const RunConfig& cfg);
  void set(const std::string& section, const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void save() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;
  std::vector<std::string> order_;
};

}  // namespace stemml::pipeline
