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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "stemml/cluster/cluster.hpp"
#include "stemml/io/dataset.hpp"
#include "stemml/pipeline/config.hpp"

namespace stemml::pipeline {

/// Artifact names inside a run directory.
namespace files {
inline constexpr const char* kData = "data.npy";
inline constexpr const char* kGroundTruth = "ground_truth.csv";
inline constexpr const char* kEmbedding = "embedding.npy";
inline constexpr const char* kBootstrapped = "embedding_bootstrap.npy";
inline constexpr const char* kLabels = "labels.npy";
inline constexpr const char* kLabelsCsv = "labels.csv";
inline constexpr const char* kSpatialMap = "spatial_map.npy";
inline constexpr const char* kSpatialPng = "spatial_map.png";
inline constexpr const char* kDecayFit = "decay_fit.csv";
inline constexpr const char* kClusterStats = "cluster_stats.csv";
inline constexpr const char* kClusterMean = "cluster_mean.npy";
inline constexpr const char* kClusterStd = "cluster_std.npy";
inline constexpr const char* kGlobalMean = "global_mean.npy";
inline constexpr const char* kMeanSubtracted = "mean_subtracted.npy";
inline constexpr const char* kLoadings = "loadings.npy";
inline constexpr const char* kHaadf = "haadf.npy";
inline constexpr const char* kHaadfPng = "haadf.png";
inline constexpr const char* kCom = "com.npy";
inline constexpr const char* kStabilityAri = "stability_ari.csv";
inline constexpr const char* kStabilityLabels = "stability_labels.npy";
}  // namespace files

/// In-memory state shared by consecutive stages of one process. Stages load
/// what is missing from the run directory, so a fresh context reproduces a
/// monolithic run.
struct Context {
  std::optional<ScanGrid4D> grid;
  std::optional<FlatDataset> flat;
  std::optional<Embedding> embedding;     ///< from embed
  std::optional<Embedding> bootstrapped;  ///< from bootstrap
  std::optional<cluster::ClusterAssignment> assignment;
};

/// Raised with the stage name prefixed to the cause.
std::string stage_message(const std::string& stage, const std::string& cause);

void cmd_generate(const RunConfig& cfg);
void cmd_embed(const RunConfig& cfg, Context& ctx);
void cmd_bootstrap(const RunConfig& cfg, Context& ctx);
void cmd_cluster(const RunConfig& cfg, Context& ctx);
void cmd_analyze(const RunConfig& cfg, Context& ctx);
void cmd_stability(const RunConfig& cfg, Context& ctx);
/// embed -> [bootstrap] -> cluster -> analyze in one process.
void cmd_pipeline(const RunConfig& cfg);

/// Labels for an embedding under the clustering settings of cfg. Fills fit
/// when auto_k is set.
cluster::ClusterAssignment cluster_embedding(const RunConfig& cfg, const Embedding& y,
                                             cluster::DecayFit* fit = nullptr);

/// The embedding the cluster stage reads: bootstrapped when rounds > 0.
Embedding load_final_embedding(const RunConfig& cfg);
std::vector<int> load_labels(const std::filesystem::path& dir, std::size_t n);
Embedding load_embedding(const std::filesystem::path& path);
void save_embedding(const std::filesystem::path& path, const Embedding& y);

/// Resolved HAADF annulus for a detector of ky x kx pixels.
std::pair<double, double> haadf_radii(const RunConfig& cfg, std::size_t ky, std::size_t kx);

}  // namespace stemml::pipeline
