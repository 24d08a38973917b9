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

#include "stemml/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "stemml/core/error.hpp"

namespace stemml::pipeline {

ClusterMode parse_cluster_mode(const std::string& text) {
  if (text == "hdbscan") return ClusterMode::hdbscan;
  if (text == "spectral") return ClusterMode::spectral;
  fail(Errc::invalid_argument, fmt::format("unknown clustering mode '{}' (hdbscan, spectral)", text));
}

std::string cluster_mode_name(ClusterMode m) { return m == ClusterMode::hdbscan ? "hdbscan" : "spectral"; }

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, Errc::invalid_argument, "config: " + what); };
  umap.validate();
  check(!(auto_k && mode == ClusterMode::spectral), "auto_k is only valid with mode = hdbscan");
  check(min_cluster_size >= 2, "min_cluster_size must be >= 2");
  check(n_clusters >= 1, "n_clusters must be >= 1");
  check(spectral_neighbors >= 1, "spectral_neighbors must be >= 1");
  check(k_min >= 2 && k_min <= k_max, "k range must satisfy 2 <= k_min <= k_max");
  check(std::isfinite(haadf_inner) && !std::isnan(haadf_outer), "HAADF radii must be numbers");
  check(haadf_outer <= 0.0 || haadf_inner < haadf_outer, "haadf_inner must be < haadf_outer");
  check(!vmin || !vmax || *vmin < *vmax, "vmin must be < vmax");
  check(reruns >= 2, "reruns must be >= 2");
}

unsigned RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

umap::UmapParams RunConfig::resolved_umap() const {
  umap::UmapParams p = umap;
  p.seed = seed;
  p.threads = resolved_threads();
  return p;
}

namespace {

std::string format_double(double v) { return fmt::format("{}", v); }

double parse_double(const std::string& key, const std::string& text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && ptr == text.data() + text.size(), Errc::invalid_argument,
          fmt::format("config: {} expects a number, got '{}'", key, text));
  return v;
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& text) {
  T v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && ptr == text.data() + text.size(), Errc::invalid_argument,
          fmt::format("config: {} expects a non-negative integer, got '{}'", key, text));
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  fail(Errc::invalid_argument, fmt::format("config: {} expects true or false, got '{}'", key, text));
}

std::string axes_string(const AxisOrder& a) { return fmt::format("{},{},{},{}", a[0], a[1], a[2], a[3]); }

std::string dopants_string(const std::vector<synth::DopantSite>& ds) {
  std::string out;
  for (const auto& d : ds) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}:{}:{}", format_double(d.iy), format_double(d.ix), format_double(d.response_scale));
  }
  return out;
}

std::vector<synth::DopantSite> parse_dopants(const std::string& key, const std::string& text) {
  std::vector<synth::DopantSite> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find(';', start), text.size());
    const std::string item = text.substr(start, end - start);
    const std::size_t a = item.find(':'), b = item.find(':', a == std::string::npos ? a : a + 1);
    require(a != std::string::npos && b != std::string::npos, Errc::invalid_argument,
            fmt::format("config: {} entries are iy:ix:scale, got '{}'", key, item));
    out.push_back({parse_double(key, item.substr(0, a)), parse_double(key, item.substr(a + 1, b - a - 1)),
                   parse_double(key, item.substr(b + 1))});
    start = end + 1;
  }
  return out;
}

struct Binding {
  const char* key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class T>
Binding bind_unsigned(const char* key, T& field) {
  return {key, [&field] { return fmt::format("{}", field); },
          [&field, key](const std::string& v) { field = parse_unsigned<T>(key, v); }};
}
Binding bind_double(const char* key, double& field) {
  return {key, [&field] { return format_double(field); }, [&field, key](const std::string& v) { field = parse_double(key, v); }};
}
Binding bind_bool(const char* key, bool& field) {
  return {key, [&field] { return std::string(field ? "true" : "false"); },
          [&field, key](const std::string& v) { field = parse_bool(key, v); }};
}
Binding bind_optional(const char* key, std::optional<double>& field) {
  return {key, [&field] { return field ? format_double(*field) : std::string(); },
          [&field, key](const std::string& v) {
            if (v.empty()) field.reset();
            else field = parse_double(key, v);
          }};
}

// Fixed key order; the manifest lists keys in this order.
std::vector<Binding> bindings(RunConfig& c) {
  synth::SynthConfig& s = c.synth;
  umap::UmapParams& u = c.umap;
  return {
      {"run.input", [&c] { return c.input.string(); }, [&c](const std::string& v) { c.input = v; }},
      {"run.outdir", [&c] { return c.outdir.string(); }, [&c](const std::string& v) { c.outdir = v; }},
      bind_unsigned("run.seed", c.seed),
      bind_unsigned("run.threads", c.threads),
      {"run.axes", [&c] { return axes_string(c.axes); }, [&c](const std::string& v) { c.axes = parse_axis_order(v); }},
      bind_bool("run.normalize", c.normalize),
      bind_unsigned("synth.ny", s.ny),
      bind_unsigned("synth.nx", s.nx),
      bind_unsigned("synth.ky", s.ky),
      bind_unsigned("synth.kx", s.kx),
      bind_double("synth.pitch", s.pitch),
      bind_double("synth.origin_y", s.origin_y),
      bind_double("synth.origin_x", s.origin_x),
      bind_double("synth.rotation", s.rotation),
      bind_double("synth.disk_radius", s.disk_radius),
      bind_double("synth.edge_width", s.edge_width),
      bind_double("synth.disk_intensity", s.disk_intensity),
      bind_double("synth.gain", s.gain),
      bind_double("synth.range", s.range),
      bind_double("synth.anisotropy", s.anisotropy),
      bind_double("synth.halo", s.halo),
      bind_double("synth.pedestal", s.pedestal),
      bind_double("synth.core_fraction", s.core_fraction),
      bind_double("synth.taper", s.taper),
      bind_double("synth.noise_sigma", s.noise_sigma),
      bind_double("synth.blur_sigma", s.blur_sigma),
      {"synth.dopants", [&s] { return dopants_string(s.dopants); },
       [&s](const std::string& v) { s.dopants = parse_dopants("synth.dopants", v); }},
      bind_unsigned("umap.n_neighbors", u.n_neighbors),
      bind_double("umap.min_dist", u.min_dist),
      bind_double("umap.spread", u.spread),
      bind_unsigned("umap.d", u.d),
      bind_unsigned("umap.n_epochs", u.n_epochs),
      bind_unsigned("umap.negative_sample_rate", u.negative_sample_rate),
      bind_double("umap.learning_rate", u.learning_rate),
      bind_double("umap.a", u.a),
      bind_double("umap.b", u.b),
      {"umap.knn", [&u] { return umap::knn_method_name(u.knn); },
       [&u](const std::string& v) { u.knn = umap::parse_knn_method(v); }},
      {"umap.disconnected_init", [&u] { return umap::disconnected_init_name(u.disconnected_init); },
       [&u](const std::string& v) { u.disconnected_init = umap::parse_disconnected_init(v); }},
      bind_unsigned("umap.bootstrap_rounds", c.bootstrap_rounds),
      bind_bool("umap.bootstrap_from_previous", u.bootstrap_from_previous),
      {"cluster.mode", [&c] { return cluster_mode_name(c.mode); },
       [&c](const std::string& v) { c.mode = parse_cluster_mode(v); }},
      bind_unsigned("cluster.min_cluster_size", c.min_cluster_size),
      bind_unsigned("cluster.n_clusters", c.n_clusters),
      bind_unsigned("cluster.spectral_neighbors", c.spectral_neighbors),
      bind_bool("cluster.auto_k", c.auto_k),
      bind_unsigned("cluster.k_min", c.k_min),
      bind_unsigned("cluster.k_max", c.k_max),
      bind_double("analysis.haadf_inner", c.haadf_inner),
      bind_double("analysis.haadf_outer", c.haadf_outer),
      {"analysis.center",
       [&c] { return std::string(c.center == analysis::CenterMode::geometric ? "geometric" : "mean"); },
       [&c](const std::string& v) {
         if (v == "geometric") c.center = analysis::CenterMode::geometric;
         else if (v == "mean") c.center = analysis::CenterMode::mean_centroid;
         else fail(Errc::invalid_argument, fmt::format("config: analysis.center expects geometric or mean, got '{}'", v));
       }},
      bind_optional("analysis.vmin", c.vmin),
      bind_optional("analysis.vmax", c.vmax),
      bind_unsigned("stability.reruns", c.reruns),
      bind_bool("stability.exclude_noise", c.stability_exclude_noise),
  };
}

bool skipped_section(const std::string& name) { return name == "result" || name.rfind("stage.", 0) == 0; }

}  // namespace

Settings to_settings(const RunConfig& cfg) {
  RunConfig copy = cfg;
  Settings out;
  for (const Binding& b : bindings(copy)) out.emplace_back(b.key, b.get());
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Binding& b : bindings(cfg))
    if (key == b.key) {
      b.set(value);
      return;
    }
  fail(Errc::invalid_argument, fmt::format("config: unknown key '{}'", key));
}

void apply_settings(RunConfig& cfg, const Settings& settings) {
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
}

Settings read_ini(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), Errc::not_found, fmt::format("config file {} does not exist", path.string()));
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(Errc::format, fmt::format("cannot parse {}: {}", path.string(), e.message()));
  }
  Settings out;
  for (const auto& [section, body] : tree) {
    if (skipped_section(section)) continue;
    require(!body.empty() || body.data().empty(), Errc::format,
            fmt::format("{}: key '{}' outside a section", path.string(), section));
    for (const auto& [key, value] : body) out.emplace_back(section + "." + key, value.data());
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_settings(cfg, read_ini(path));
  return cfg;
}

Manifest::Manifest(std::filesystem::path dir) : path_(std::move(dir) / "manifest.ini") {
  if (!std::filesystem::exists(path_)) return;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path_.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(Errc::format, fmt::format("cannot parse {}: {}", path_.string(), e.message()));
  }
  for (const auto& [section, body] : tree)
    for (const auto& [key, value] : body) set(section, key, value.data());
}

void Manifest::set_config(const RunConfig& cfg) {
  for (const auto& [name, value] : to_settings(cfg)) {
    const std::size_t dot = name.find('.');
    set(name.substr(0, dot), name.substr(dot + 1), value);
  }
}

void Manifest::set(const std::string& section, const std::string& key, const std::string& value) {
  auto [it, inserted] = sections_.try_emplace(section);
  if (inserted) order_.push_back(section);
  for (auto& [k, v] : it->second)
    if (k == key) {
      v = value;
      return;
    }
  it->second.emplace_back(key, value);
}

std::optional<std::string> Manifest::get(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return std::nullopt;
  for (const auto& [k, v] : it->second)
    if (k == key) return v;
  return std::nullopt;
}

void Manifest::save() const {
  std::filesystem::create_directories(path_.parent_path());
  const std::filesystem::path tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp);
    require(out.good(), Errc::io, fmt::format("cannot write {}", tmp.string()));
    for (const std::string& section : order_) {
      out << '[' << section << "]\n";
      for (const auto& [k, v] : sections_.at(section)) out << k << " = " << v << '\n';
      out << '\n';
    }
    require(!out.fail(), Errc::io, fmt::format("cannot write {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path_);
}

}  // namespace stemml::pipeline
