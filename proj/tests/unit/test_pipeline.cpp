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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "stemml/core/error.hpp"
#include "stemml/io/npy.hpp"
#include "stemml/pipeline/config.hpp"
#include "stemml/pipeline/pipeline.hpp"

using namespace stemml;
using namespace stemml::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stemml_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 16 x 16 scan, 32 x 32 detector: small enough for a full run in about a second.
RunConfig small_run(const fs::path& dir) {
  RunConfig c;
  c.outdir = dir;
  c.threads = 1;
  c.synth.ny = c.synth.nx = 16;
  c.synth.ky = c.synth.kx = 32;
  c.umap.n_neighbors = 15;
  c.min_cluster_size = 10;
  c.k_min = 5;
  c.k_max = 20;
  return c;
}

RunConfig generated(const std::string& name) {
  RunConfig c = small_run(scratch(name));
  cmd_generate(c);
  c.input = c.outdir / files::kData;
  return c;
}

}  // namespace

TEST_CASE("settings round-trip through text") {
  RunConfig c;
  c.seed = 42;
  c.synth.dopants = {{3.5, 4.0, 2.0}, {10.0, 1.0, 3.0}};
  c.synth.anisotropy = 0.1;
  c.vmin = -1.5;
  c.haadf_outer = std::numeric_limits<double>::infinity();
  c.mode = ClusterMode::spectral;
  c.umap.knn = umap::KnnMethod::nndescent;
  const Settings s = to_settings(c);
  RunConfig d;
  apply_settings(d, s);
  CHECK(to_settings(d) == s);
  CHECK(d.synth.dopants.size() == 2);
  CHECK(d.synth.dopants[1].response_scale == 3.0);
  CHECK(d.synth.anisotropy == 0.1);
  CHECK(*d.vmin == -1.5);
  CHECK_FALSE(d.vmax.has_value());
  CHECK(std::isinf(d.haadf_outer));
}

TEST_CASE("config errors name the key or invariant") {
  RunConfig c;
  auto message = [&](const std::string& key, const std::string& value) {
    try {
      apply_setting(c, key, value);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::invalid_argument);
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("umap.nope", "1").find("umap.nope") != std::string::npos);
  CHECK(message("umap.n_neighbors", "-3").find("umap.n_neighbors") != std::string::npos);
  CHECK(message("cluster.mode", "kmeans").find("kmeans") != std::string::npos);
  CHECK(message("run.normalize", "maybe").find("run.normalize") != std::string::npos);
  RunConfig bad;
  bad.mode = ClusterMode::spectral;
  bad.auto_k = true;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("auto_k"), Error);
  bad.auto_k = false;
  bad.k_min = 30;
  bad.k_max = 20;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("k range"), Error);
}

TEST_CASE("INI config files load with sections and reject stray keys") {
  const fs::path dir = scratch("ini");
  {
    std::ofstream out(dir / "a.ini");
    out << "[run]\nseed = 7\n\n[cluster]\nmode = spectral\nn_clusters = 4\n\n[stage.embed]\nseconds = 1\n";
  }
  const RunConfig c = load_config(dir / "a.ini");
  CHECK(c.seed == 7);
  CHECK(c.mode == ClusterMode::spectral);
  CHECK(c.n_clusters == 4);
  {
    std::ofstream out(dir / "b.ini");
    out << "seed = 7\n";
  }
  CHECK_THROWS_AS(load_config(dir / "b.ini"), Error);
  CHECK_THROWS_AS(load_config(dir / "missing.ini"), Error);
}

TEST_CASE("generate is deterministic in the seed") {
  const RunConfig a = generated("gen_a");
  const RunConfig b = generated("gen_b");
  CHECK(slurp(a.outdir / files::kData) == slurp(b.outdir / files::kData));
  CHECK(slurp(a.outdir / files::kGroundTruth) == slurp(b.outdir / files::kGroundTruth));
  RunConfig c = small_run(scratch("gen_c"));
  c.seed = 1;
  cmd_generate(c);
  CHECK(slurp(a.outdir / files::kData) != slurp(c.outdir / files::kData));
  RunConfig bad = small_run(scratch("gen_bad"));
  bad.synth.disk_radius = 100.0;
  CHECK_THROWS_WITH_AS(cmd_generate(bad), doctest::Contains("disk"), Error);
}

TEST_CASE("stage-wise runs reproduce the monolithic pipeline bit-exactly") {
  const RunConfig mono = generated("mono");
  cmd_pipeline(mono);

  RunConfig split = mono;
  split.outdir = scratch("split");
  Context a, b, c;
  cmd_embed(split, a);
  cmd_cluster(split, b);
  cmd_analyze(split, c);
  for (const char* f : {files::kEmbedding, files::kLabels, files::kLabelsCsv, files::kSpatialMap, files::kSpatialPng,
                        files::kClusterMean, files::kClusterStd, files::kMeanSubtracted, files::kLoadings, files::kHaadf,
                        files::kCom}) {
    CAPTURE(f);
    CHECK(slurp(mono.outdir / f) == slurp(split.outdir / f));
  }

  // The manifest alone reproduces the run.
  RunConfig again = load_config(mono.outdir / "manifest.ini");
  again.outdir = scratch("again");
  cmd_pipeline(again);
  CHECK(slurp(mono.outdir / files::kLabels) == slurp(again.outdir / files::kLabels));
  CHECK(slurp(mono.outdir / files::kEmbedding) == slurp(again.outdir / files::kEmbedding));
  const Manifest m(mono.outdir);
  CHECK(m.get("stage.embed", "seconds").has_value());
  CHECK(m.get("stage.analyze", "seconds").has_value());
  CHECK(m.get("umap", "n_neighbors") == "15");
}

TEST_CASE("bootstrap stage feeds the cluster stage") {
  RunConfig c = generated("boot");
  c.bootstrap_rounds = 1;
  Context ctx;
  cmd_embed(c, ctx);
  Context fresh;
  CHECK_THROWS_WITH_AS(cmd_cluster(c, fresh), doctest::Contains(files::kBootstrapped), Error);
  cmd_bootstrap(c, fresh);
  cmd_cluster(c, fresh);
  CHECK(fs::exists(c.outdir / files::kLabels));
  const Embedding y0 = load_embedding(c.outdir / files::kEmbedding);
  const Embedding y1 = load_embedding(c.outdir / files::kBootstrapped);
  CHECK(y0.n == y1.n);
  CHECK(y0.coords != y1.coords);
}

TEST_CASE("missing inputs and prior-stage files are reported by name") {
  RunConfig c = small_run(scratch("missing"));
  c.input = c.outdir / "nothing.npy";
  Context ctx;
  try {
    cmd_embed(c, ctx);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_found);
    CHECK(std::string(e.what()).find("nothing.npy") != std::string::npos);
    CHECK(std::string(e.what()).find("stage embed") != std::string::npos);
  }
  try {
    Context fresh;
    cmd_cluster(c, fresh);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_found);
    CHECK(std::string(e.what()).find(files::kEmbedding) != std::string::npos);
  }
}

TEST_CASE("auto k writes the decay fit and records the chosen k") {
  RunConfig c = generated("autok");
  c.auto_k = true;
  Context ctx;
  cmd_embed(c, ctx);
  cmd_cluster(c, ctx);
  const Manifest m(c.outdir);
  const auto k = m.get("result", "k_star");
  REQUIRE(k.has_value());
  const std::size_t k_star = std::stoul(*k);
  CHECK(k_star >= c.k_min);
  CHECK(k_star <= c.k_max);
  std::ifstream in(c.outdir / files::kDecayFit);
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,clusters,fitted");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == c.k_max - c.k_min + 1);
}

TEST_CASE("stability writes an m x m ARI matrix") {
  RunConfig c = generated("stability");
  c.reruns = 3;
  c.mode = ClusterMode::spectral;
  Context ctx;
  cmd_stability(c, ctx);
  std::ifstream in(c.outdir / files::kStabilityAri);
  std::string line;
  std::getline(in, line);
  CHECK(line == "seed0,seed1,seed2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
    ++rows;
  }
  CHECK(rows == 3);
  const io::NdArray<std::int32_t> labels = io::load_npy<std::int32_t>(c.outdir / files::kStabilityLabels);
  CHECK(labels.shape == std::vector<std::size_t>{3, 256});
  CHECK(Manifest(c.outdir).get("result", "stability_median_ari").has_value());
}
