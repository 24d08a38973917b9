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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "stemml/cluster/cluster.hpp"
#include "stemml/io/dataset.hpp"
#include "stemml/pipeline/config.hpp"

namespace stemml::server {

using json = nlohmann::json;

/// Loaded run: raw data, current embedding and labels. Row count of the
/// embedding, label count and scan pixel count agree.
struct SessionState {
  ScanGrid4D grid;
  FlatDataset flat;
  Embedding embedding;
  cluster::ClusterAssignment assignment;
  pipeline::RunConfig config;  ///< clustering fields track the last recluster
};

/// Reads manifest.ini, the input named there, the final embedding and labels.
SessionState load_run(const std::filesystem::path& dir);

struct Response {
  int status = 200;
  json body;
};

/// The /api surface without transport. Readers run concurrently; recluster
/// computes outside the lock, then swaps labels under an exclusive lock.
/// A second recluster while one runs is rejected with status 409.
class ExploreService {
 public:
  explicit ExploreService(SessionState state);

  Response meta() const;
  Response embedding() const;
  Response labels() const;
  Response spatial_map() const;
  Response ronchigram(std::size_t iy, std::size_t ix, const std::string& dtype = "f4") const;
  Response selection_summary(const json& request) const;
  Response recluster(const json& request);
  Response haadf(double inner, double outer, const std::string& dtype = "f4") const;

  std::uint64_t revision() const;

 private:
  mutable std::shared_mutex mutex_;
  std::atomic<bool> busy_{false};
  SessionState state_;
  std::vector<double> global_mean_;
  std::uint64_t revision_ = 0;
};

/// Little-endian float blob, base64 encoded. dtype is "f4" or "f8".
json encode_array(const std::vector<double>& values, const std::vector<std::size_t>& shape, const std::string& dtype);

/// HTTP front end on 127.0.0.1. Static files under / come from static_dir when set.
class HttpServer {
 public:
  HttpServer(ExploreService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// serve --dir --port entry point.
void cmd_serve(const std::filesystem::path& dir, int port, std::optional<std::filesystem::path> static_dir = std::nullopt);

}  // namespace stemml::server
