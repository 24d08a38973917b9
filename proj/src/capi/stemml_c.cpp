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

#include "stemml/stemml.h"

#include <cstring>
#include <new>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"
#include "stemml/io/dataset.hpp"
#include "stemml/pipeline/config.hpp"
#include "stemml/pipeline/pipeline.hpp"
#include "stemml/server/server.hpp"
#include "stemml/synth/synth.hpp"
#include "stemml/umap/umap.hpp"

struct stemml_config {
  stemml::pipeline::RunConfig cfg;
};

struct stemml_dataset {
  stemml::ScanGrid4D grid;
  std::optional<stemml::synth::GroundTruth> truth;
};

struct stemml_embedding {
  stemml::Embedding y;
};

namespace {

thread_local std::string last_error;

stemml_status to_status(stemml::Errc code) {
  using stemml::Errc;
  switch (code) {
    case Errc::invalid_argument: return STEMML_E_INVALID_ARGUMENT;
    case Errc::io: return STEMML_E_IO;
    case Errc::format: return STEMML_E_FORMAT;
    case Errc::shape: return STEMML_E_SHAPE;
    case Errc::validation: return STEMML_E_VALIDATION;
    case Errc::not_found: return STEMML_E_NOT_FOUND;
    case Errc::numerical: return STEMML_E_NUMERICAL;
    case Errc::busy: return STEMML_E_BUSY;
    default: return STEMML_E_INTERNAL;
  }
}

stemml_status failed(stemml_status s, const std::string& message) {
  last_error = message;
  return s;
}

template <class Fn>
stemml_status guard(Fn&& fn) noexcept {
  try {
    fn();
    return STEMML_OK;
  } catch (const stemml::Error& e) {
    return failed(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return failed(STEMML_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return failed(STEMML_E_INTERNAL, e.what());
  } catch (...) {
    return failed(STEMML_E_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  stemml::require(p != nullptr, stemml::Errc::invalid_argument, std::string(what) + " must not be NULL");
}

void copy_out(const std::string& value, char* buf, size_t capacity, size_t* needed) {
  if (needed) *needed = value.size() + 1;
  if (capacity == 0) return;
  need(buf, "buf");
  stemml::require(capacity > value.size(), stemml::Errc::invalid_argument,
                  "buffer too small; *needed holds the required size");
  std::memcpy(buf, value.c_str(), value.size() + 1);
}

std::string ini_text(const stemml::pipeline::RunConfig& cfg) {
  std::string out, section;
  for (const auto& [name, value] : stemml::pipeline::to_settings(cfg)) {
    const std::size_t dot = name.find('.');
    const std::string s = name.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += name.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

}  // namespace

extern "C" {

const char* stemml_version(void) { return "0.1.0"; }

const char* stemml_last_error(void) { return last_error.c_str(); }

const char* stemml_status_name(stemml_status status) {
  switch (status) {
    case STEMML_OK: return "ok";
    case STEMML_E_INVALID_ARGUMENT: return "invalid_argument";
    case STEMML_E_IO: return "io";
    case STEMML_E_FORMAT: return "format";
    case STEMML_E_SHAPE: return "shape";
    case STEMML_E_VALIDATION: return "validation";
    case STEMML_E_NOT_FOUND: return "not_found";
    case STEMML_E_NUMERICAL: return "numerical";
    case STEMML_E_BUSY: return "busy";
    case STEMML_E_INTERNAL: return "internal";
  }
  return "unknown";
}

stemml_status stemml_set_log_level(int level) {
  return guard([&] {
    stemml::require(level >= 0 && level <= 6, stemml::Errc::invalid_argument, "log level must be in [0, 6]");
    spdlog::set_level(static_cast<spdlog::level::level_enum>(level));
  });
}

stemml_status stemml_config_create(stemml_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new stemml_config{};
  });
}

stemml_status stemml_config_load(const char* path, stemml_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto* c = new stemml_config{};
    try {
      c->cfg = stemml::pipeline::load_config(path);
    } catch (...) {
      delete c;
      throw;
    }
    *out = c;
  });
}

void stemml_config_destroy(stemml_config* config) { delete config; }

stemml_status stemml_config_set(stemml_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    stemml::pipeline::apply_setting(config->cfg, key, value);
  });
}

stemml_status stemml_config_get(const stemml_config* config, const char* key, char* buf, size_t capacity, size_t* needed) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    for (const auto& [name, value] : stemml::pipeline::to_settings(config->cfg))
      if (name == key) {
        copy_out(value, buf, capacity, needed);
        return;
      }
    stemml::fail(stemml::Errc::invalid_argument, std::string("config: unknown key '") + key + "'");
  });
}

stemml_status stemml_config_dump(const stemml_config* config, char* buf, size_t capacity, size_t* needed) {
  return guard([&] {
    need(config, "config");
    copy_out(ini_text(config->cfg), buf, capacity, needed);
  });
}

stemml_status stemml_config_validate(const stemml_config* config) {
  return guard([&] {
    need(config, "config");
    config->cfg.validate();
  });
}

stemml_status stemml_run_stage(const stemml_config* config, stemml_stage stage) {
  return guard([&] {
    need(config, "config");
    namespace pl = stemml::pipeline;
    const pl::RunConfig& cfg = config->cfg;
    pl::Context ctx;
    switch (stage) {
      case STEMML_STAGE_GENERATE: pl::cmd_generate(cfg); break;
      case STEMML_STAGE_EMBED: pl::cmd_embed(cfg, ctx); break;
      case STEMML_STAGE_BOOTSTRAP: pl::cmd_bootstrap(cfg, ctx); break;
      case STEMML_STAGE_CLUSTER: pl::cmd_cluster(cfg, ctx); break;
      case STEMML_STAGE_ANALYZE: pl::cmd_analyze(cfg, ctx); break;
      case STEMML_STAGE_STABILITY: pl::cmd_stability(cfg, ctx); break;
      case STEMML_STAGE_PIPELINE: pl::cmd_pipeline(cfg); break;
      default: stemml::fail(stemml::Errc::invalid_argument, "unknown stage");
    }
  });
}

stemml_status stemml_serve(const char* run_dir, int port, const char* static_dir) {
  return guard([&] {
    need(run_dir, "run_dir");
    stemml::require(port > 0 && port < 65536, stemml::Errc::invalid_argument, "port must be in [1, 65535]");
    std::optional<std::filesystem::path> dir;
    if (static_dir) dir = static_dir;
    stemml::server::cmd_serve(run_dir, port, dir);
  });
}

stemml_status stemml_dataset_load(const char* path, const char* axes, stemml_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    const stemml::AxisOrder order = axes ? stemml::parse_axis_order(axes) : stemml::kCanonicalAxes;
    *out = new stemml_dataset{stemml::load_npy_4d(path, order), std::nullopt};
  });
}

stemml_status stemml_dataset_generate(const stemml_config* config, stemml_dataset** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    stemml::synth::SynthConfig sc = config->cfg.synth;
    sc.seed = config->cfg.seed;
    stemml::synth::SynthResult r = stemml::synth::generate(sc, config->cfg.resolved_threads());
    *out = new stemml_dataset{std::move(r.data), std::move(r.truth)};
  });
}

void stemml_dataset_destroy(stemml_dataset* dataset) { delete dataset; }

stemml_status stemml_dataset_shape(const stemml_dataset* dataset, size_t shape[4]) {
  return guard([&] {
    need(dataset, "dataset");
    need(shape, "shape");
    const auto s = dataset->grid.shape();
    for (int i = 0; i < 4; ++i) shape[i] = s[static_cast<std::size_t>(i)];
  });
}

stemml_status stemml_dataset_values(const stemml_dataset* dataset, const double** values) {
  return guard([&] {
    need(dataset, "dataset");
    need(values, "values");
    *values = dataset->grid.values().data();
  });
}

stemml_status stemml_dataset_truth(const stemml_dataset* dataset, int32_t* classes, size_t count) {
  return guard([&] {
    need(dataset, "dataset");
    stemml::require(dataset->truth.has_value(), stemml::Errc::not_found, "dataset has no ground truth");
    const auto& c = dataset->truth->classes;
    stemml::require(count == c.size(), stemml::Errc::shape, "count must equal the number of scan pixels");
    if (count) need(classes, "classes");
    for (std::size_t i = 0; i < count; ++i) classes[i] = c[i];
  });
}

stemml_status stemml_embed(const stemml_dataset* dataset, const stemml_config* config, stemml_embedding** out) {
  return guard([&] {
    need(dataset, "dataset");
    need(config, "config");
    need(out, "out");
    config->cfg.validate();
    const stemml::FlatDataset flat = stemml::flatten(dataset->grid);
    *out = new stemml_embedding{stemml::umap::umap(flat.view(), config->cfg.resolved_umap())};
  });
}

stemml_status stemml_embedding_create(const double* coords, size_t n, size_t d, stemml_embedding** out) {
  return guard([&] {
    need(out, "out");
    if (n * d != 0) need(coords, "coords");
    std::vector<double> v(coords, coords + n * d);
    *out = new stemml_embedding{stemml::Embedding(n, d, std::move(v))};
  });
}

void stemml_embedding_destroy(stemml_embedding* embedding) { delete embedding; }

stemml_status stemml_embedding_shape(const stemml_embedding* embedding, size_t* n, size_t* d) {
  return guard([&] {
    need(embedding, "embedding");
    if (n) *n = embedding->y.n;
    if (d) *d = embedding->y.d;
  });
}

stemml_status stemml_embedding_coords(const stemml_embedding* embedding, const double** coords) {
  return guard([&] {
    need(embedding, "embedding");
    need(coords, "coords");
    *coords = embedding->y.coords.data();
  });
}

stemml_status stemml_cluster(const stemml_embedding* embedding, const stemml_config* config, int32_t* labels, size_t count,
                             size_t* n_clusters) {
  return guard([&] {
    need(embedding, "embedding");
    need(config, "config");
    stemml::require(count == embedding->y.n, stemml::Errc::shape, "count must equal the number of embedded points");
    if (count) need(labels, "labels");
    config->cfg.validate();
    const stemml::cluster::ClusterAssignment a = stemml::pipeline::cluster_embedding(config->cfg, embedding->y);
    for (std::size_t i = 0; i < count; ++i) labels[i] = a.labels[i];
    if (n_clusters) *n_clusters = a.n_clusters;
  });
}

stemml_status stemml_adjusted_rand_index(const int32_t* a, const int32_t* b, size_t count, int exclude_noise, double* out) {
  return guard([&] {
    need(out, "out");
    if (count) {
      need(a, "a");
      need(b, "b");
    }
    const std::vector<int> va(a, a + count), vb(b, b + count);
    *out = stemml::cluster::adjusted_rand_index(va, vb, exclude_noise != 0);
  });
}

}  // extern "C"
