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

#include "stemml/pipeline/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/analysis/analysis.hpp"
#include "stemml/core/error.hpp"
#include "stemml/core/random.hpp"
#include "stemml/io/csv.hpp"
#include "stemml/io/npy.hpp"
#include "stemml/render/png.hpp"
#include "stemml/synth/synth.hpp"
#include "stemml/umap/umap.hpp"

namespace stemml::pipeline {

namespace fs = std::filesystem;

std::string stage_message(const std::string& stage, const std::string& cause) {
  return fmt::format("stage {} failed: {}", stage, cause);
}

namespace {

// Bootstrap rounds draw from their own stream so they never replay the embed seed.
constexpr std::uint64_t kStreamBootstrap = 1;

class Stage {
 public:
  Stage(const RunConfig& cfg, std::string name) : cfg_(cfg), name_(std::move(name)) {
    fs::create_directories(cfg.outdir);
    spdlog::info("stage {}", name_);
  }

  void record(const std::string& key, const std::string& value) { entries_.push_back({"stage." + name_, key, value}); }
  void result(const std::string& key, const std::string& value) { entries_.push_back({"result", key, value}); }
  fs::path out(const char* file) const { return cfg_.outdir / file; }

  // Re-reads the manifest so records of nested stages are kept.
  void finish() {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    record("seconds", fmt::format("{:.3f}", seconds));
    Manifest manifest(cfg_.outdir);
    RunConfig resolved = cfg_;
    resolved.threads = cfg_.resolved_threads();
    if (!resolved.input.empty()) resolved.input = fs::absolute(resolved.input);
    manifest.set_config(resolved);
    for (const auto& [section, key, value] : entries_) manifest.set(section, key, value);
    manifest.save();
  }

  template <class Fn>
  void run(Fn&& body) {
    try {
      body();
      finish();
    } catch (const Error& e) {
      throw Error(e.code(), stage_message(name_, e.what()));
    } catch (const std::bad_alloc&) {
      throw Error(Errc::internal, stage_message(name_, "out of memory"));
    } catch (const std::exception& e) {
      throw Error(Errc::internal, stage_message(name_, e.what()));
    }
  }

 private:
  struct Entry {
    std::string section, key, value;
  };
  const RunConfig& cfg_;
  std::string name_;
  std::vector<Entry> entries_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void require_file(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), Errc::not_found,
          fmt::format("missing {}; run {} first", path.string(), producer));
}

void ensure_data(const RunConfig& cfg, Context& ctx) {
  if (ctx.grid) return;
  require(!cfg.input.empty(), Errc::invalid_argument, "no input file given");
  require(fs::exists(cfg.input), Errc::not_found, fmt::format("input {} does not exist", cfg.input.string()));
  ScanGrid4D g = load_npy_4d(cfg.input, cfg.axes);
  if (cfg.normalize) g = normalize_frames(g);
  ctx.flat = flatten(g);
  ctx.grid = std::move(g);
}

ScanShape scan_shape_of(const RunConfig& cfg, const Context& ctx) {
  if (ctx.grid) return ctx.grid->scan_shape();
  require(!cfg.input.empty(), Errc::invalid_argument, "no input file given");
  require(fs::exists(cfg.input), Errc::not_found, fmt::format("input {} does not exist", cfg.input.string()));
  std::ifstream in(cfg.input, std::ios::binary);
  const io::NpyHeader h = io::read_npy_header(in);
  require(h.shape.size() == 4, Errc::shape, fmt::format("{} is not a 4D array", cfg.input.string()));
  return {h.shape[static_cast<std::size_t>(cfg.axes[0])], h.shape[static_cast<std::size_t>(cfg.axes[1])]};
}

io::Array as_array(std::vector<std::size_t> shape, std::vector<double> values) {
  return io::Array(std::move(shape), std::move(values));
}

render::ScaleOptions scale_options(const RunConfig& cfg) {
  render::ScaleOptions o;
  o.vmin = cfg.vmin;
  o.vmax = cfg.vmax;
  return o;
}

Embedding final_embedding(const RunConfig& cfg, const Context& ctx) {
  if (cfg.bootstrap_rounds > 0 && ctx.bootstrapped) return *ctx.bootstrapped;
  if (cfg.bootstrap_rounds == 0 && ctx.embedding) return *ctx.embedding;
  return load_final_embedding(cfg);
}

}  // namespace

void save_embedding(const fs::path& path, const Embedding& y) { io::save_array(path, as_array({y.n, y.d}, y.coords)); }

Embedding load_embedding(const fs::path& path) {
  const io::Array a = io::load_array(path, {std::nullopt, std::nullopt});
  return Embedding(a.shape[0], a.shape[1], a.data);
}

Embedding load_final_embedding(const RunConfig& cfg) {
  if (cfg.bootstrap_rounds > 0) {
    const fs::path p = cfg.outdir / files::kBootstrapped;
    require_file(p, "bootstrap");
    return load_embedding(p);
  }
  const fs::path p = cfg.outdir / files::kEmbedding;
  require_file(p, "embed");
  return load_embedding(p);
}

std::vector<int> load_labels(const fs::path& dir, std::size_t n) {
  const fs::path p = dir / files::kLabels;
  require_file(p, "cluster");
  const io::NdArray<std::int32_t> a = io::load_npy<std::int32_t>(p);
  require(a.shape == std::vector<std::size_t>{n}, Errc::shape,
          fmt::format("{} has shape {}, expected ({},)", p.string(), io::shape_string(a.shape), n));
  return {a.data.begin(), a.data.end()};
}

std::pair<double, double> haadf_radii(const RunConfig& cfg, std::size_t ky, std::size_t kx) {
  const double inner = cfg.haadf_inner > 0.0 ? cfg.haadf_inner : 0.25 * static_cast<double>(std::min(ky, kx));
  const double outer = cfg.haadf_outer > 0.0 ? cfg.haadf_outer : std::numeric_limits<double>::infinity();
  return {inner, outer};
}

cluster::ClusterAssignment cluster_embedding(const RunConfig& cfg, const Embedding& y, cluster::DecayFit* fit) {
  const unsigned threads = cfg.resolved_threads();
  if (cfg.mode == ClusterMode::spectral) {
    cluster::SpectralParams sp;
    sp.n_clusters = cfg.n_clusters;
    sp.n_neighbors = cfg.spectral_neighbors;
    sp.seed = cfg.seed;
    return cluster::spectral_cluster(y.view(), sp, threads);
  }
  std::size_t mcs = cfg.min_cluster_size;
  if (cfg.auto_k) {
    const cluster::DecayFit f = cluster::select_k(y.view(), cfg.k_min, cfg.k_max, threads);
    mcs = f.k_star;
    if (fit) *fit = f;
  }
  require(y.n >= 2, Errc::invalid_argument, "clustering needs at least 2 points");
  return cluster::hdbscan(y.view(), mcs, 0, threads);
}

void cmd_generate(const RunConfig& cfg) {
  Stage stage(cfg, "generate");
  stage.run([&] {
    synth::SynthConfig sc = cfg.synth;
    sc.seed = cfg.seed;
    const synth::SynthResult r = synth::generate(sc, cfg.resolved_threads());
    save_npy_4d(stage.out(files::kData), r.data);
    synth::write_ground_truth_csv(stage.out(files::kGroundTruth), r.truth);
    stage.record("output", files::kData);
    stage.record("shape", fmt::format("{},{},{},{}", sc.ny, sc.nx, sc.ky, sc.kx));
    stage.record("disk_radius", fmt::format("{:.17g}", sc.resolved_disk_radius()));
    stage.record("atoms", fmt::format("{}", r.truth.atoms.size()));
  });
}

void cmd_embed(const RunConfig& cfg, Context& ctx) {
  Stage stage(cfg, "embed");
  stage.run([&] {
    cfg.validate();
    ensure_data(cfg, ctx);
    const umap::UmapParams p = cfg.resolved_umap();
    Embedding y = umap::umap(ctx.flat->view(), p);
    require(y.all_finite(), Errc::numerical, "embedding contains non-finite coordinates");
    save_embedding(stage.out(files::kEmbedding), y);
    stage.record("output", files::kEmbedding);
    stage.record("n", fmt::format("{}", y.n));
    stage.record("p", fmt::format("{}", ctx.flat->p()));
    stage.record("epochs", fmt::format("{}", p.resolved_epochs(y.n)));
    stage.record("seed", fmt::format("{}", p.seed));
    ctx.embedding = std::move(y);
    ctx.bootstrapped.reset();
  });
}

void cmd_bootstrap(const RunConfig& cfg, Context& ctx) {
  Stage stage(cfg, "bootstrap");
  stage.run([&] {
    cfg.validate();
    require(cfg.bootstrap_rounds >= 1, Errc::invalid_argument, "umap.bootstrap_rounds must be >= 1 for bootstrap");
    if (!ctx.embedding) {
      require_file(stage.out(files::kEmbedding), "embed");
      ctx.embedding = load_embedding(stage.out(files::kEmbedding));
    }
    umap::UmapParams p = cfg.resolved_umap();
    p.seed = derive_seed(cfg.seed, kStreamBootstrap);
    Embedding y = umap::bootstrap(*ctx.embedding, p, cfg.bootstrap_rounds);
    save_embedding(stage.out(files::kBootstrapped), y);
    stage.record("output", files::kBootstrapped);
    stage.record("rounds", fmt::format("{}", cfg.bootstrap_rounds));
    stage.record("seed", fmt::format("{}", p.seed));
    ctx.bootstrapped = std::move(y);
  });
}

void cmd_cluster(const RunConfig& cfg, Context& ctx) {
  Stage stage(cfg, "cluster");
  stage.run([&] {
    cfg.validate();
    const Embedding y = final_embedding(cfg, ctx);
    const ScanShape shape = scan_shape_of(cfg, ctx);
    require(shape.size() == y.n, Errc::shape,
            fmt::format("embedding has {} rows but the scan has {} pixels", y.n, shape.size()));
    cluster::DecayFit fit;
    cluster::ClusterAssignment a = cluster_embedding(cfg, y, &fit);

    io::save_npy<std::int32_t>(stage.out(files::kLabels),
                               io::NdArray<std::int32_t>({y.n}, std::vector<std::int32_t>(a.labels.begin(), a.labels.end())));
    io::CsvWriter csv(stage.out(files::kLabelsCsv), "index,iy,ix,label,probability");
    for (std::size_t i = 0; i < y.n; ++i) {
      const ScanPosition pos = scan_position(i, shape.nx);
      csv.row(i, pos.iy, pos.ix, a.labels[i], a.probabilities[i]);
    }
    csv.close();
    const analysis::SpatialMap map = analysis::spatial_map(a.labels, shape);
    io::save_array(stage.out(files::kSpatialMap), as_array({shape.ny, shape.nx}, map.values));
    render::write_png(stage.out(files::kSpatialPng), render::render_labels(map));

    if (cfg.auto_k && cfg.mode == ClusterMode::hdbscan) {
      io::CsvWriter decay(stage.out(files::kDecayFit), "k,clusters,fitted");
      for (std::size_t t = 0; t < fit.ks.size(); ++t) {
        const double model = fit.C * (fit.tau > 0.0 ? std::exp(-static_cast<double>(fit.ks[t] - fit.k_min) / fit.tau) : 0.0) + fit.b;
        decay.row(fit.ks[t], fit.counts[t], model);
      }
      decay.close();
      stage.result("k_star", fmt::format("{}", fit.k_star));
      stage.result("tau", fmt::format("{:.17g}", fit.tau));
      stage.result("C", fmt::format("{:.17g}", fit.C));
      stage.result("b", fmt::format("{:.17g}", fit.b));
      stage.result("decay_degenerate", fit.degenerate ? "true" : "false");
    }
    const std::size_t noise = static_cast<std::size_t>(std::count(a.labels.begin(), a.labels.end(), -1));
    stage.result("n_clusters", fmt::format("{}", a.n_clusters));
    stage.result("noise", fmt::format("{}", noise));
    stage.record("output", files::kLabels);
    stage.record("mode", cluster_mode_name(cfg.mode));
    ctx.assignment = std::move(a);
  });
}

void cmd_analyze(const RunConfig& cfg, Context& ctx) {
  Stage stage(cfg, "analyze");
  stage.run([&] {
    cfg.validate();
    ensure_data(cfg, ctx);
    const ScanGrid4D& g = *ctx.grid;
    const FlatDataset& flat = *ctx.flat;
    const std::vector<int> labels = ctx.assignment ? ctx.assignment->labels : load_labels(cfg.outdir, flat.n());
    require(labels.size() == flat.n(), Errc::shape, "label count does not match the dataset");

    const analysis::ClusterStats stats = analysis::cluster_stats(flat, labels);
    const std::vector<double> global = global_mean_frame(flat);
    const auto deltas = analysis::mean_subtracted(stats, global);
    const std::size_t m = stats.clusters.size(), p = flat.p();
    std::vector<double> means, stds, delta_flat, loadings;
    means.reserve(m * p);
    stds.reserve(m * p);
    io::CsvWriter csv(stage.out(files::kClusterStats), "index,label,count,median_std_over_mean");
    for (std::size_t c = 0; c < m; ++c) {
      const analysis::ClusterEntry& e = stats.clusters[c];
      means.insert(means.end(), e.mean.begin(), e.mean.end());
      stds.insert(stds.end(), e.std.begin(), e.std.end());
      delta_flat.insert(delta_flat.end(), deltas[c].begin(), deltas[c].end());
      std::vector<double> ratio;
      for (std::size_t j = 0; j < p; ++j)
        if (e.mean[j] > 0.0) ratio.push_back(e.std[j] / e.mean[j]);
      double median = std::numeric_limits<double>::quiet_NaN();
      if (!ratio.empty()) {
        std::nth_element(ratio.begin(), ratio.begin() + static_cast<std::ptrdiff_t>(ratio.size() / 2), ratio.end());
        median = ratio[ratio.size() / 2];
      }
      csv.row(c, e.label, e.count, median);
      const analysis::SpatialMap l = analysis::similarity_loading(flat, e.mean);
      loadings.insert(loadings.end(), l.values.begin(), l.values.end());
      render::write_png(cfg.outdir / fmt::format("loading_{}.png", e.label), render::render_scalar(l, scale_options(cfg)));
    }
    csv.close();
    io::save_array(stage.out(files::kClusterMean), as_array({m, g.ky(), g.kx()}, std::move(means)));
    io::save_array(stage.out(files::kClusterStd), as_array({m, g.ky(), g.kx()}, std::move(stds)));
    io::save_array(stage.out(files::kMeanSubtracted), as_array({m, g.ky(), g.kx()}, std::move(delta_flat)));
    io::save_array(stage.out(files::kGlobalMean), as_array({g.ky(), g.kx()}, global));
    io::save_array(stage.out(files::kLoadings), as_array({m, g.ny(), g.nx()}, std::move(loadings)));

    const auto [inner, outer] = haadf_radii(cfg, g.ky(), g.kx());
    const analysis::VirtualImage h = analysis::virtual_haadf(g, inner, outer);
    io::save_array(stage.out(files::kHaadf), as_array({g.ny(), g.nx()}, h.map.values));
    render::write_png(stage.out(files::kHaadfPng), render::render_scalar(h.map, scale_options(cfg)));

    const analysis::DeflectionField com = analysis::com_map(g, cfg.center, cfg.resolved_threads());
    std::vector<double> field(com.dy);
    field.insert(field.end(), com.dx.begin(), com.dx.end());
    io::save_array(stage.out(files::kCom), as_array({2, g.ny(), g.nx()}, std::move(field)));

    stage.record("clusters", fmt::format("{}", m));
    stage.record("haadf_inner", fmt::format("{:.17g}", inner));
    stage.record("haadf_outer", fmt::format("{:.17g}", outer));
    stage.record("haadf_pixels", fmt::format("{}", h.mask.pixels));
    stage.record("com_center", fmt::format("{:.17g},{:.17g}", com.cy, com.cx));
  });
}

void cmd_stability(const RunConfig& cfg, Context& ctx) {
  Stage stage(cfg, "stability");
  stage.run([&] {
    cfg.validate();
    ensure_data(cfg, ctx);
    std::vector<std::uint64_t> seeds(cfg.reruns);
    for (std::size_t r = 0; r < cfg.reruns; ++r) seeds[r] = cfg.seed + r;
    const analysis::LabelRun run = [&](std::uint64_t seed) {
      RunConfig c = cfg;
      c.seed = seed;
      Embedding y = umap::umap(ctx.flat->view(), c.resolved_umap());
      if (c.bootstrap_rounds > 0) {
        umap::UmapParams p = c.resolved_umap();
        p.seed = derive_seed(seed, kStreamBootstrap);
        y = umap::bootstrap(y, p, c.bootstrap_rounds);
      }
      spdlog::info("stability rerun with seed {}", seed);
      return cluster_embedding(c, y).labels;
    };
    const analysis::StabilityReport rep = analysis::rerun_stability(run, seeds, cfg.stability_exclude_noise);
    const std::size_t m = seeds.size(), n = ctx.flat->n();
    std::string header;
    for (std::size_t r = 0; r < m; ++r) header += fmt::format("{}seed{}", r ? "," : "", seeds[r]);
    std::ofstream out(stage.out(files::kStabilityAri));
    require(out.good(), Errc::io, "cannot write the stability matrix");
    out << header << '\n';
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t s = 0; s < m; ++s) out << (s ? "," : "") << fmt::format("{:.17g}", rep.ari[r * m + s]);
      out << '\n';
    }
    out.close();
    require(!out.fail(), Errc::io, "cannot write the stability matrix");
    std::vector<std::int32_t> all;
    all.reserve(m * n);
    for (const auto& l : rep.labels) all.insert(all.end(), l.begin(), l.end());
    io::save_npy<std::int32_t>(stage.out(files::kStabilityLabels), io::NdArray<std::int32_t>({m, n}, std::move(all)));
    stage.result("stability_min_ari", fmt::format("{:.17g}", rep.min));
    stage.result("stability_median_ari", fmt::format("{:.17g}", rep.median));
    stage.record("reruns", fmt::format("{}", m));
    stage.record("output", files::kStabilityAri);
  });
}

void cmd_pipeline(const RunConfig& cfg) {
  Stage stage(cfg, "pipeline");
  stage.run([&] {
    cfg.validate();
    Context ctx;
    cmd_embed(cfg, ctx);
    if (cfg.bootstrap_rounds > 0) cmd_bootstrap(cfg, ctx);
    cmd_cluster(cfg, ctx);
    cmd_analyze(cfg, ctx);
  });
}

}  // namespace stemml::pipeline
