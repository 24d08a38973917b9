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

// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "stemml/stemml.h"

namespace {

// 0 success, 1 internal failure, 2 usage or input error.
int exit_code(stemml_status s) {
  switch (s) {
    case STEMML_OK: return 0;
    case STEMML_E_INVALID_ARGUMENT:
    case STEMML_E_FORMAT:
    case STEMML_E_SHAPE:
    case STEMML_E_VALIDATION:
    case STEMML_E_NOT_FOUND: return 2;
    default: return 1;
  }
}

int report(stemml_status s) {
  if (s != STEMML_OK) std::fprintf(stderr, "stemml: error (%s): %s\n", stemml_status_name(s), stemml_last_error());
  return exit_code(s);
}

struct Options {
  std::string config, input, outdir, axes;
  std::optional<unsigned long long> seed;
  std::optional<unsigned> threads;
  std::optional<double> vmin, vmax;
  std::vector<std::string> sets;
  bool verbose = false, quiet = false, print_config = false;

  // Stage flags, applied only when given.
  std::optional<std::string> mode;
  bool auto_k = false;
  std::optional<std::size_t> min_cluster_size, n_clusters, k_min, k_max, reruns, bootstrap_rounds;
  std::optional<double> haadf_inner, haadf_outer;
  std::optional<std::string> center;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "INI config file (flags override its values)");
  cmd->add_option("--input", o.input, "4D NPY input");
  cmd->add_option("--outdir", o.outdir, "run directory");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--threads", o.threads, "worker threads (default: logical cores)");
  cmd->add_option("--axes", o.axes, "input axis order, e.g. 2,3,0,1 or qy,qx,iy,ix");
  cmd->add_option("--vmin", o.vmin, "lower end of the PNG color scale");
  cmd->add_option("--vmax", o.vmax, "upper end of the PNG color scale");
  cmd->add_option("--set", o.sets, "override one key, section.key=value (repeatable)");
  cmd->add_flag("--print-config", o.print_config, "print the resolved config before running");
  cmd->add_flag("-v,--verbose", o.verbose, "debug logging");
  cmd->add_flag("-q,--quiet", o.quiet, "warnings and errors only");
}

void add_cluster(CLI::App* cmd, Options& o) {
  cmd->add_option("--mode", o.mode, "hdbscan or spectral")->check(CLI::IsMember({"hdbscan", "spectral"}));
  cmd->add_flag("--auto-k", o.auto_k, "choose min_cluster_size with the k sweep (hdbscan)");
  cmd->add_option("--min-cluster-size", o.min_cluster_size, "hdbscan minimum cluster size");
  cmd->add_option("--n-clusters", o.n_clusters, "spectral cluster count");
  cmd->add_option("--k-min", o.k_min, "first k of the sweep");
  cmd->add_option("--k-max", o.k_max, "last k of the sweep");
  cmd->add_option("--bootstrap-rounds", o.bootstrap_rounds, "graph bootstrap rounds after the embedding");
}

void add_analysis(CLI::App* cmd, Options& o) {
  cmd->add_option("--haadf-inner", o.haadf_inner, "HAADF inner radius, detector pixels");
  cmd->add_option("--haadf-outer", o.haadf_outer, "HAADF outer radius, detector pixels");
  cmd->add_option("--center", o.center, "COM reference center: geometric or mean")->check(CLI::IsMember({"geometric", "mean"}));
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::pair<std::string, std::string>> overrides(const Options& o) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (!o.input.empty()) kv.emplace_back("run.input", o.input);
  if (!o.outdir.empty()) kv.emplace_back("run.outdir", o.outdir);
  if (o.seed) kv.emplace_back("run.seed", std::to_string(*o.seed));
  if (o.threads) kv.emplace_back("run.threads", std::to_string(*o.threads));
  if (!o.axes.empty()) kv.emplace_back("run.axes", o.axes);
  if (o.vmin) kv.emplace_back("analysis.vmin", num(*o.vmin));
  if (o.vmax) kv.emplace_back("analysis.vmax", num(*o.vmax));
  if (o.mode) kv.emplace_back("cluster.mode", *o.mode);
  if (o.auto_k) kv.emplace_back("cluster.auto_k", "true");
  if (o.min_cluster_size) kv.emplace_back("cluster.min_cluster_size", std::to_string(*o.min_cluster_size));
  if (o.n_clusters) kv.emplace_back("cluster.n_clusters", std::to_string(*o.n_clusters));
  if (o.k_min) kv.emplace_back("cluster.k_min", std::to_string(*o.k_min));
  if (o.k_max) kv.emplace_back("cluster.k_max", std::to_string(*o.k_max));
  if (o.bootstrap_rounds) kv.emplace_back("umap.bootstrap_rounds", std::to_string(*o.bootstrap_rounds));
  if (o.reruns) kv.emplace_back("stability.reruns", std::to_string(*o.reruns));
  if (o.haadf_inner) kv.emplace_back("analysis.haadf_inner", num(*o.haadf_inner));
  if (o.haadf_outer) kv.emplace_back("analysis.haadf_outer", num(*o.haadf_outer));
  if (o.center) kv.emplace_back("analysis.center", *o.center);
  return kv;
}

int run_stage(const Options& o, stemml_stage stage) {
  if (o.quiet) stemml_set_log_level(3);
  else if (o.verbose) stemml_set_log_level(1);
  else stemml_set_log_level(2);

  stemml_config* cfg = nullptr;
  stemml_status s = o.config.empty() ? stemml_config_create(&cfg) : stemml_config_load(o.config.c_str(), &cfg);
  if (s != STEMML_OK) return report(s);
  struct Free {
    stemml_config* c;
    ~Free() { stemml_config_destroy(c); }
  } release{cfg};

  for (const auto& [k, v] : overrides(o))
    if ((s = stemml_config_set(cfg, k.c_str(), v.c_str())) != STEMML_OK) return report(s);
  for (const std::string& item : o.sets) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "stemml: error: --set expects section.key=value, got '%s'\n", item.c_str());
      return 2;
    }
    if ((s = stemml_config_set(cfg, item.substr(0, eq).c_str(), item.substr(eq + 1).c_str())) != STEMML_OK) return report(s);
  }
  if (stage != STEMML_STAGE_GENERATE && (s = stemml_config_validate(cfg)) != STEMML_OK) return report(s);
  if (o.print_config) {
    size_t needed = 0;
    stemml_config_dump(cfg, nullptr, 0, &needed);
    std::string text(needed, '\0');
    stemml_config_dump(cfg, text.data(), text.size(), &needed);
    std::fputs(text.c_str(), stdout);
  }
  return report(stemml_run_stage(cfg, stage));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D-STEM manifold embedding, clustering and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", stemml_version());

  Options o;
  struct Sub {
    const char* name;
    const char* help;
    stemml_stage stage;
  };
  const Sub subs[] = {
      {"generate", "write a synthetic dataset, ground truth and manifest", STEMML_STAGE_GENERATE},
      {"embed", "embed the input frames", STEMML_STAGE_EMBED},
      {"bootstrap", "rebuild the neighbor graph on the embedding and re-embed", STEMML_STAGE_BOOTSTRAP},
      {"cluster", "cluster the embedding", STEMML_STAGE_CLUSTER},
      {"analyze", "cluster statistics, loadings, HAADF and COM maps", STEMML_STAGE_ANALYZE},
      {"stability", "rerun embedding and clustering over seeds and compare", STEMML_STAGE_STABILITY},
      {"pipeline", "embed, [bootstrap], cluster and analyze", STEMML_STAGE_PIPELINE},
  };
  std::optional<stemml_stage> chosen;
  for (const Sub& sub : subs) {
    CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
    add_common(cmd, o);
    if (sub.stage == STEMML_STAGE_CLUSTER || sub.stage == STEMML_STAGE_PIPELINE || sub.stage == STEMML_STAGE_STABILITY ||
        sub.stage == STEMML_STAGE_BOOTSTRAP)
      add_cluster(cmd, o);
    if (sub.stage == STEMML_STAGE_ANALYZE || sub.stage == STEMML_STAGE_PIPELINE) add_analysis(cmd, o);
    if (sub.stage == STEMML_STAGE_STABILITY) cmd->add_option("--reruns", o.reruns, "number of reruns");
    const stemml_stage stage = sub.stage;
    cmd->callback([&chosen, stage] { chosen = stage; });
  }

  std::string dir, static_dir;
  int port = 8080;
  bool serve = false;
  CLI::App* srv = app.add_subcommand("serve", "serve the explorer API for a run directory");
  srv->add_option("--dir", dir, "run directory")->required();
  srv->add_option("--port", port, "TCP port on 127.0.0.1")->check(CLI::Range(1, 65535));
  srv->add_option("--static", static_dir, "directory with the built explorer UI");
  srv->callback([&serve] { serve = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (serve) return report(stemml_serve(dir.c_str(), port, static_dir.empty() ? nullptr : static_dir.c_str()));
  return run_stage(o, *chosen);
}
