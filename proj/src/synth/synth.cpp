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

#include "stemml/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "stemml/core/error.hpp"
#include "stemml/core/parallel.hpp"
#include "stemml/core/random.hpp"
#include "stemml/io/csv.hpp"

namespace stemml::synth {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

double wrap_degrees(double angle) {
  angle = std::fmod(angle, 360.0);
  return angle < 0.0 ? angle + 360.0 : angle;
}

/// Sector index 0..2 for sublattice A boundaries {90, 210, 330} (B rotated by 60).
int sector_of(double angle_deg, Sublattice s) {
  const double offset = s == Sublattice::A ? 330.0 : 30.0;
  return static_cast<int>(wrap_degrees(angle_deg - offset) / 120.0) % 3;
}

void gaussian_blur(std::vector<double>& frame, std::size_t ky, std::size_t kx, double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) total += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (double& k : kernel) k /= total;
  // Reflect (half-sample symmetric) boundary keeps a uniform field uniform.
  auto reflect = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return static_cast<std::size_t>(i);
  };
  std::vector<double> tmp(frame.size());
  for (std::size_t y = 0; y < ky; ++y)
    for (std::size_t x = 0; x < kx; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * frame[y * kx + reflect(long(x) + t, long(kx))];
      tmp[y * kx + x] = acc;
    }
  for (std::size_t y = 0; y < ky; ++y)
    for (std::size_t x = 0; x < kx; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * tmp[reflect(long(y) + t, long(ky)) * kx + x];
      frame[y * kx + x] = acc;
    }
}

struct PatternParams {
  double shift_y = 0.0, shift_x = 0.0;  // pattern displacement on the detector
  double modulation = 0.0;              // disk radius modulation amplitude
  double cos2a = 1.0, sin2a = 0.0;      // orientation of the modulation
  double halo = 0.0;
};

/// Shifted soft disk with an orientation-dependent radius plus a high-angle
/// ring. Both parts are centrally symmetric about the shifted center, so the
/// pattern centroid is the shifted center.
void render_pattern(const SynthConfig& cfg, const PatternParams& pp, std::vector<double>& out) {
  const double cy = 0.5 * (static_cast<double>(cfg.ky) - 1.0) + pp.shift_y;
  const double cx = 0.5 * (static_cast<double>(cfg.kx) - 1.0) + pp.shift_x;
  const double radius = cfg.resolved_disk_radius();
  const double half = 0.5 * static_cast<double>(std::min(cfg.ky, cfg.kx));
  const double ring_radius = radius + 0.35 * (half - radius);
  const double ring_width = 0.1 * (half - radius);
  const double inv_w = 1.0 / cfg.edge_width;
  for (std::size_t qy = 0; qy < cfg.ky; ++qy) {
    const double uy = static_cast<double>(qy) - cy;
    for (std::size_t qx = 0; qx < cfg.kx; ++qx) {
      const double ux = static_cast<double>(qx) - cx;
      const double rho2 = uy * uy + ux * ux;
      const double rho = std::sqrt(rho2);
      double edge = radius;
      if (pp.modulation != 0.0 && rho2 > 0.0) {
        const double cos2phi = (ux * ux - uy * uy) / rho2;
        const double sin2phi = 2.0 * ux * uy / rho2;
        edge += pp.modulation * (cos2phi * pp.cos2a + sin2phi * pp.sin2a);
      }
      double value = cfg.disk_intensity / (1.0 + std::exp((rho - edge) * inv_w));
      if (pp.halo != 0.0) {
        const double t = (rho - ring_radius) / ring_width;
        value += pp.halo * std::exp(-0.5 * t * t);
      }
      out[qy * cfg.kx + qx] = value;
    }
  }
}

/// 1 inside the core, falling to 0 with a raised cosine over the next
/// taper * core_radius beyond it.
double core_taper(const SynthConfig& cfg, double r) {
  const double inner = cfg.core_radius();
  const double outer = (1.0 + cfg.taper) * inner;
  if (r <= inner) return 1.0;
  if (r >= outer) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - inner) / (outer - inner)));
}

}  // namespace

double SynthConfig::resolved_disk_radius() const {
  return disk_radius > 0.0 ? disk_radius : static_cast<double>(std::min(ky, kx)) / 6.0;
}

void SynthConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, Errc::invalid_argument, "synth config: " + what); };
  check(ny >= 1 && nx >= 1, "scan extents must be >= 1");
  check(ky >= 1 && kx >= 1, "detector extents must be >= 1");
  check(resolved_disk_radius() < 0.5 * static_cast<double>(std::min(ky, kx)), "disk radius must be < min(ky,kx)/2");
  check(gain >= 0.0, "deflection gain must be >= 0");
  check(noise_sigma >= 0.0, "noise sigma must be >= 0");
  check(blur_sigma >= 0.0, "blur sigma must be >= 0");
  check(pitch > 0.0, "lattice pitch must be > 0");
  check(range > 0.0, "deflection range must be > 0");
  check(edge_width > 0.0, "edge width must be > 0");
  check(anisotropy >= 0.0 && halo >= 0.0 && pedestal >= 0.0, "anisotropy, halo and pedestal must be >= 0");
  check(core_fraction > 0.0, "core fraction must be > 0");
  check(taper >= 0.0, "taper must be >= 0");
  for (const auto& d : dopants) check(d.response_scale > 0.0, "dopant response scale must be > 0");
}

int mirror_class(int cls) {
  switch (cls) {
    case 1: return 5;
    case 2: return 6;
    case 3: return 4;
    case 4: return 3;
    case 5: return 1;
    case 6: return 2;
    default: return kBackground;
  }
}

double sector_center_degrees(int cls) {
  require(cls >= 1 && cls <= 6, Errc::invalid_argument, fmt::format("class {} has no sector", cls));
  const double base = cls <= 3 ? 30.0 : 90.0;
  return wrap_degrees(base + 120.0 * ((cls - 1) % 3));
}

bool is_sublattice_a(int cls) { return cls >= 1 && cls <= 3; }

Lattice::Lattice(const SynthConfig& cfg) : core_radius_(cfg.core_radius()), rotation_(cfg.rotation) {
  const double p = cfg.pitch;
  const double bond = p / std::sqrt(3.0);
  const double row = p * std::sqrt(3.0) / 2.0;
  const double margin = 2.0 * p;
  const double ymin = -margin, ymax = static_cast<double>(cfg.ny) + margin;
  const double xmin = -margin, xmax = static_cast<double>(cfg.nx) + margin;
  const double c = std::cos(cfg.rotation / kDeg), s = std::sin(cfg.rotation / kDeg);
  // Lattice-frame box covering the scan region after rotation about the origin.
  double uy_lo = 0.0, uy_hi = 0.0, ux_lo = 0.0, ux_hi = 0.0;
  for (double y : {ymin, ymax})
    for (double x : {xmin, xmax}) {
      const double dy = y - cfg.origin_y, dx = x - cfg.origin_x;
      const double uy = c * dy - s * dx, ux = s * dy + c * dx;
      uy_lo = std::min(uy_lo, uy);
      uy_hi = std::max(uy_hi, uy);
      ux_lo = std::min(ux_lo, ux);
      ux_hi = std::max(ux_hi, ux);
    }
  const long j0 = static_cast<long>(std::floor((uy_lo - bond) / row)) - 1;
  const long j1 = static_cast<long>(std::ceil(uy_hi / row)) + 1;
  for (long j = j0; j <= j1; ++j) {
    const double uy = static_cast<double>(j) * row;
    const double ushift = 0.5 * p * static_cast<double>(j);
    const long i0 = static_cast<long>(std::floor((ux_lo - ushift) / p)) - 1;
    const long i1 = static_cast<long>(std::ceil((ux_hi - ushift) / p)) + 1;
    for (long i = i0; i <= i1; ++i) {
      const double ux = ushift + static_cast<double>(i) * p;
      // B sits one bond length along the lattice +y axis from its A partner.
      for (auto [ly, sub] : {std::pair{uy, Sublattice::A}, std::pair{uy + bond, Sublattice::B}}) {
        const double ay = cfg.origin_y + c * ly + s * ux;
        const double ax = cfg.origin_x - s * ly + c * ux;
        if (ay < ymin || ay > ymax || ax < xmin || ax > xmax) continue;
        atoms_.push_back({ay, ax, sub, false, 1.0});
      }
    }
  }
  for (const auto& site : cfg.dopants) {
    const Nearest near = nearest(site.iy, site.ix);
    atoms_[near.index].dopant = true;
    atoms_[near.index].response_scale = site.response_scale;
  }
}

Lattice::Nearest Lattice::nearest(double y, double x) const {
  Nearest best;
  double best_d2 = std::numeric_limits<double>::max();
  for (std::size_t a = 0; a < atoms_.size(); ++a) {
    const double dy = y - atoms_[a].y;
    const double dx = x - atoms_[a].x;
    const double d2 = dy * dy + dx * dx;
    // Distances equal to rounding count as ties and keep the earlier atom.
    if (d2 < best_d2 - 1e-12 * (1.0 + best_d2)) {
      best_d2 = d2;
      best = {a, dy, dx, 0.0};
    }
  }
  best.r = std::sqrt(best_d2);
  return best;
}

int Lattice::classify(const Nearest& near) const {
  if (near.r > core_radius_) return kBackground;
  const Sublattice s = atoms_[near.index].sublattice;
  const double angle = wrap_degrees(std::atan2(near.dy, near.dx) * kDeg - rotation_);
  return 1 + sector_of(angle, s) + (s == Sublattice::B ? 3 : 0);
}

std::vector<ScanPosition> GroundTruth::dopant_pixels() const {
  std::vector<ScanPosition> out;
  for (const auto& atom : atoms) {
    if (!atom.dopant) continue;
    const double y = std::clamp(std::round(atom.y), 0.0, static_cast<double>(scan.ny - 1));
    const double x = std::clamp(std::round(atom.x), 0.0, static_cast<double>(scan.nx - 1));
    out.push_back({static_cast<std::size_t>(y), static_cast<std::size_t>(x)});
  }
  return out;
}

std::array<double, 2> expected_deflection(const SynthConfig& cfg, const Lattice& lattice, double iy, double ix) {
  const Lattice::Nearest near = lattice.nearest(iy, ix);
  if (near.r == 0.0) return {0.0, 0.0};
  const double magnitude = cfg.gain * std::exp(-near.r / cfg.range) * core_taper(cfg, near.r);
  return {-magnitude * near.dy / near.r, -magnitude * near.dx / near.r};
}

std::array<double, 2> expected_deflection(const SynthConfig& cfg, double iy, double ix) {
  return expected_deflection(cfg, Lattice(cfg), iy, ix);
}

SynthResult generate(const SynthConfig& cfg, unsigned threads) {
  cfg.validate();
  const Lattice lattice(cfg);
  const std::size_t n = cfg.ny * cfg.nx;
  const std::size_t p = cfg.ky * cfg.kx;

  GroundTruth truth;
  truth.scan = {cfg.ny, cfg.nx};
  truth.atoms = lattice.atoms();
  truth.classes.resize(n);
  truth.nearest_atom.resize(n);
  truth.nearest_distance.resize(n);
  truth.dopant_mask.resize(n);

  std::vector<double> values(n * p);
  const double pedestal_mass = cfg.pedestal * static_cast<double>(p);
  const double halo_sigma = 0.12 * cfg.pitch;

  parallel_for(n, threads, [&](std::size_t i) {
    const ScanPosition pos = scan_position(i, cfg.nx);
    const double y = static_cast<double>(pos.iy), x = static_cast<double>(pos.ix);
    const Lattice::Nearest near = lattice.nearest(y, x);
    const Atom& atom = lattice.atoms()[near.index];
    const int cls = lattice.classify(near);
    truth.classes[i] = cls;
    truth.nearest_atom[i] = near.index;
    truth.nearest_distance[i] = near.r;
    truth.dopant_mask[i] = atom.dopant ? 1 : 0;

    PatternParams pp;
    if (cls != kBackground) {
      // B sectors turn the modulation a quarter turn, so mirror pairs carry
      // opposite quadrupoles and all six orientations differ.
      const double quarter = is_sublattice_a(cls) ? 0.0 : 90.0;
      const double alpha = (sector_center_degrees(cls) + quarter + cfg.rotation) / kDeg;
      pp.modulation = cfg.anisotropy * cfg.gain;
      pp.cos2a = std::cos(2.0 * alpha);
      pp.sin2a = std::sin(2.0 * alpha);
    }
    pp.halo = cfg.halo * cfg.gain * std::exp(-0.5 * near.r * near.r / (halo_sigma * halo_sigma));

    std::vector<double> frame(p);
    render_pattern(cfg, pp, frame);
    double pattern_mass = 0.0;
    for (double v : frame) pattern_mass += v;

    // The uniform pedestal pulls the centroid toward the detector center, so
    // the pattern moves further to land the centroid on the target shift.
    const auto target = expected_deflection(cfg, lattice, y, x);
    const double stretch = pattern_mass > 0.0 ? (pattern_mass + pedestal_mass) / pattern_mass : 1.0;
    pp.shift_y = target[0] * stretch;
    pp.shift_x = target[1] * stretch;
    if (pp.shift_y != 0.0 || pp.shift_x != 0.0) render_pattern(cfg, pp, frame);

    const double scale = atom.dopant ? atom.response_scale : 1.0;
    for (double& v : frame) v = (v + cfg.pedestal) * scale;
    if (cfg.blur_sigma > 0.0) gaussian_blur(frame, cfg.ky, cfg.kx, cfg.blur_sigma);
    if (cfg.noise_sigma > 0.0) {
      Rng rng(derive_seed(cfg.seed, i));
      std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
      for (double& v : frame) v = std::max(0.0, v + noise(rng));
    }
    std::copy(frame.begin(), frame.end(), values.begin() + static_cast<std::ptrdiff_t>(i * p));
  });

  return {ScanGrid4D(cfg.ny, cfg.nx, cfg.ky, cfg.kx, std::move(values)), std::move(truth)};
}

void write_ground_truth_csv(const std::filesystem::path& path, const GroundTruth& truth) {
  io::CsvWriter csv(path, "iy,ix,class,sublattice,is_dopant");
  for (std::size_t i = 0; i < truth.classes.size(); ++i) {
    const ScanPosition pos = scan_position(i, truth.scan.nx);
    csv.row(pos.iy, pos.ix, truth.classes[i], truth.sublattice(i) == Sublattice::A ? "A" : "B",
            static_cast<int>(truth.dopant_mask[i]));
  }
  csv.close();
}

}  // namespace stemml::synth
