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

#include "stemml/server/server.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "stemml/analysis/analysis.hpp"
#include "stemml/core/error.hpp"
#include "stemml/pipeline/pipeline.hpp"

namespace stemml::server {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

SessionState load_run(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.ini";
  require(fs::exists(manifest), Errc::not_found, fmt::format("{} has no manifest.ini; run the pipeline first", dir.string()));
  SessionState s;
  s.config = pipeline::load_config(manifest);
  s.config.outdir = dir;
  require(fs::exists(s.config.input), Errc::not_found,
          fmt::format("input {} named in the manifest does not exist", s.config.input.string()));
  s.grid = load_npy_4d(s.config.input, s.config.axes);
  if (s.config.normalize) s.grid = normalize_frames(s.grid);
  s.flat = flatten(s.grid);
  s.embedding = pipeline::load_final_embedding(s.config);
  require(s.embedding.n == s.flat.n(), Errc::shape, "embedding rows do not match the scan");
  s.assignment.labels = pipeline::load_labels(dir, s.flat.n());
  std::set<int> ids;
  for (int l : s.assignment.labels) {
    if (l >= 0) ids.insert(l);
    s.assignment.probabilities.push_back(l >= 0 ? 1.0 : 0.0);
  }
  s.assignment.n_clusters = ids.size();
  return s;
}

json encode_array(const std::vector<double>& values, const std::vector<std::size_t>& shape, const std::string& dtype) {
  std::string bytes;
  if (dtype == "f4") {
    bytes.resize(values.size() * sizeof(float));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float f = static_cast<float>(values[i]);
      std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
    }
  } else if (dtype == "f8") {
    bytes.resize(values.size() * sizeof(double));
    std::memcpy(bytes.data(), values.data(), bytes.size());
  } else {
    fail(Errc::invalid_argument, fmt::format("unknown dtype '{}' (f4, f8)", dtype));
  }
  return {{"dtype", "<" + dtype}, {"shape", shape}, {"data", httplib::detail::base64_encode(bytes)}};
}

namespace {

int http_status(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::validation:
    case Errc::shape:
    case Errc::format: return 400;
    case Errc::not_found: return 404;
    case Errc::busy: return 409;
    default: return 500;
  }
}

Response error_response(const Error& e) {
  return {http_status(e.code()), {{"error", e.what()}, {"code", std::string(errc_name(e.code()))}}};
}

template <class Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return {400, {{"error", e.what()}, {"code", "invalid_argument"}}};
  } catch (const std::exception& e) {
    return {500, {{"error", e.what()}, {"code", "internal"}}};
  }
}

json label_summary(const cluster::ClusterAssignment& a) {
  std::map<int, std::size_t> counts;
  for (int l : a.labels) ++counts[l];
  json clusters = json::array();
  std::size_t noise = 0;
  for (const auto& [l, c] : counts) {
    if (l < 0) noise = c;
    else clusters.push_back({{"label", l}, {"count", c}});
  }
  return {{"n_clusters", a.n_clusters}, {"noise", noise}, {"clusters", clusters}};
}

json clustering_params(const pipeline::RunConfig& c) {
  json p{{"mode", pipeline::cluster_mode_name(c.mode)}};
  if (c.mode == pipeline::ClusterMode::hdbscan) p["min_cluster_size"] = c.min_cluster_size;
  else p["n_clusters"] = c.n_clusters;
  return p;
}

}  // namespace

ExploreService::ExploreService(SessionState state) : state_(std::move(state)) {
  const std::size_t n = state_.flat.n();
  require(state_.embedding.n == n && state_.assignment.labels.size() == n, Errc::shape,
          "session embedding, labels and scan disagree in size");
  global_mean_ = global_mean_frame(state_.flat);
}

std::uint64_t ExploreService::revision() const {
  std::shared_lock lock(mutex_);
  return revision_;
}

Response ExploreService::meta() const {
  std::shared_lock lock(mutex_);
  const ScanGrid4D& g = state_.grid;
  json body{{"ny", g.ny()},
            {"nx", g.nx()},
            {"ky", g.ky()},
            {"kx", g.kx()},
            {"n", state_.flat.n()},
            {"p", state_.flat.p()},
            {"d", state_.embedding.d},
            {"revision", revision_},
            {"busy", busy_.load()},
            {"params", clustering_params(state_.config)},
            {"labels", label_summary(state_.assignment)}};
  return {200, body};
}

Response ExploreService::embedding() const {
  return guarded([&] {
    std::shared_lock lock(mutex_);
    json body = encode_array(state_.embedding.coords, {state_.embedding.n, state_.embedding.d}, "f4");
    body["revision"] = revision_;
    return Response{200, body};
  });
}

Response ExploreService::labels() const {
  std::shared_lock lock(mutex_);
  json body{{"revision", revision_}, {"labels", state_.assignment.labels}};
  body.update(label_summary(state_.assignment));
  return {200, body};
}

Response ExploreService::spatial_map() const {
  std::shared_lock lock(mutex_);
  const analysis::SpatialMap m = analysis::spatial_map(state_.assignment.labels, state_.grid.scan_shape());
  std::vector<int> values(m.values.begin(), m.values.end());
  return {200, {{"revision", revision_}, {"ny", m.ny}, {"nx", m.nx}, {"values", values}}};
}

Response ExploreService::ronchigram(std::size_t iy, std::size_t ix, const std::string& dtype) const {
  return guarded([&] {
    const ScanGrid4D& g = state_.grid;
    require(iy < g.ny() && ix < g.nx(), Errc::not_found,
            fmt::format("scan position ({}, {}) is outside [0, {}) x [0, {})", iy, ix, g.ny(), g.nx()));
    const auto f = g.frame(iy, ix);
    const std::vector<double> values(f.begin(), f.end());
    json body = encode_array(values, {g.ky(), g.kx()}, dtype);
    body["iy"] = iy;
    body["ix"] = ix;
    body["min"] = *std::min_element(values.begin(), values.end());
    body["max"] = *std::max_element(values.begin(), values.end());
    return Response{200, body};
  });
}

Response ExploreService::selection_summary(const json& request) const {
  return guarded([&] {
    require(request.is_object() && request.contains("indices") && request["indices"].is_array(), Errc::invalid_argument,
            "body must be {\"indices\": [...]}");
    std::vector<std::size_t> rows;
    for (const json& v : request["indices"]) {
      require(v.is_number_integer() && v.get<long long>() >= 0, Errc::invalid_argument, "indices must be non-negative integers");
      rows.push_back(v.get<std::size_t>());
    }
    const std::string dtype = request.value("dtype", std::string("f4"));
    const analysis::ClusterEntry e = analysis::selection_stats(state_.flat, rows);
    std::vector<double> delta(e.mean.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = e.mean[j] - global_mean_[j];
    const std::vector<std::size_t> shape{state_.grid.ky(), state_.grid.kx()};
    std::shared_lock lock(mutex_);
    return Response{200,
                    {{"count", e.count},
                     {"revision", revision_},
                     {"mean", encode_array(e.mean, shape, dtype)},
                     {"std", encode_array(e.std, shape, dtype)},
                     {"mean_minus_global", encode_array(delta, shape, dtype)}}};
  });
}

Response ExploreService::recluster(const json& request) {
  bool expected = false;
  if (!busy_.compare_exchange_strong(expected, true))
    return error_response(Error(Errc::busy, "a recluster is already running"));
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{busy_};
  return guarded([&] {
    require(request.is_object(), Errc::invalid_argument, "body must be a JSON object");
    pipeline::RunConfig cfg;
    {
      std::shared_lock lock(mutex_);
      cfg = state_.config;
    }
    cfg.mode = pipeline::parse_cluster_mode(request.value("mode", std::string("hdbscan")));
    cfg.auto_k = false;
    if (request.contains("min_cluster_size")) cfg.min_cluster_size = request["min_cluster_size"].get<std::size_t>();
    if (request.contains("n_clusters")) cfg.n_clusters = request["n_clusters"].get<std::size_t>();
    cfg.validate();
    // The embedding is only replaced by load, so it can be read without the lock.
    cluster::ClusterAssignment a = pipeline::cluster_embedding(cfg, state_.embedding);
    std::unique_lock lock(mutex_);
    state_.assignment = std::move(a);
    state_.config = cfg;
    ++revision_;
    json body{{"revision", revision_}, {"params", clustering_params(cfg)}};
    body.update(label_summary(state_.assignment));
    return Response{200, body};
  });
}

Response ExploreService::haadf(double inner, double outer, const std::string& dtype) const {
  return guarded([&] {
    const analysis::VirtualImage v = analysis::virtual_haadf(state_.grid, inner, outer);
    json body = encode_array(v.map.values, {v.map.ny, v.map.nx}, dtype);
    body["inner"] = inner;
    body["outer"] = std::isinf(outer) ? json(nullptr) : json(outer);
    body["pixels"] = v.mask.pixels;
    body["min"] = *std::min_element(v.map.values.begin(), v.map.values.end());
    body["max"] = *std::max_element(v.map.values.begin(), v.map.values.end());
    return Response{200, body};
  });
}

struct HttpServer::Impl {
  httplib::Server http;
  std::thread worker;
};

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::size_t index_param(const httplib::Request& req, const char* name) {
  require(req.has_param(name), Errc::invalid_argument, fmt::format("missing query parameter '{}'", name));
  const std::string v = req.get_param_value(name);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), Errc::invalid_argument,
          fmt::format("query parameter '{}' must be a non-negative integer", name));
  return out;
}

double number_param(const httplib::Request& req, const char* name, double fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), Errc::invalid_argument,
          fmt::format("query parameter '{}' must be a number", name));
  return out;
}

std::string dtype_param(const httplib::Request& req) {
  return req.has_param("dtype") ? req.get_param_value("dtype") : std::string("f4");
}

}  // namespace

HttpServer::HttpServer(ExploreService& service, std::optional<fs::path> static_dir) : impl_(std::make_unique<Impl>()) {
  httplib::Server& s = impl_->http;
  auto wrap = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      Response r;
      try {
        r = fn(req);
      } catch (const Error& e) {
        r = error_response(e);
      } catch (const json::exception& e) {
        r = {400, {{"error", e.what()}, {"code", "invalid_argument"}}};
      }
      reply(res, r);
    };
  };
  s.Get("/api/meta", wrap([&service](const httplib::Request&) { return service.meta(); }));
  s.Get("/api/embedding", wrap([&service](const httplib::Request&) { return service.embedding(); }));
  s.Get("/api/labels", wrap([&service](const httplib::Request&) { return service.labels(); }));
  s.Get("/api/spatial-map", wrap([&service](const httplib::Request&) { return service.spatial_map(); }));
  s.Get("/api/ronchigram", wrap([&service](const httplib::Request& req) {
          return service.ronchigram(index_param(req, "iy"), index_param(req, "ix"), dtype_param(req));
        }));
  s.Get("/api/haadf", wrap([&service](const httplib::Request& req) {
          const double inner = number_param(req, "inner", 0.0);
          const double outer = number_param(req, "outer", std::numeric_limits<double>::infinity());
          return service.haadf(inner, outer, dtype_param(req));
        }));
  s.Post("/api/selection/summary", wrap([&service](const httplib::Request& req) {
           return service.selection_summary(json::parse(req.body));
         }));
  s.Post("/api/recluster", wrap([&service](const httplib::Request& req) { return service.recluster(json::parse(req.body)); }));
  if (static_dir) {
    require(fs::is_directory(*static_dir), Errc::not_found, fmt::format("static directory {} does not exist", static_dir->string()));
    s.set_mount_point("/", static_dir->string());
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  httplib::Server& s = impl_->http;
  const int bound = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  require(bound > 0, Errc::io, fmt::format("cannot bind {}:{}", host, port));
  impl_->worker = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  require(impl_->http.bind_to_port(host, port), Errc::io, fmt::format("cannot bind {}:{}", host, port));
  spdlog::info("serving on http://{}:{}/api/meta", host, port);
  impl_->http.listen_after_bind();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

void cmd_serve(const fs::path& dir, int port, std::optional<fs::path> static_dir) {
  ExploreService service(load_run(dir));
  HttpServer server(service, std::move(static_dir));
  server.run("127.0.0.1", port);
}

}  // namespace stemml::server
