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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "stemml/io/dataset.hpp"

namespace stemml::synth {

enum class Sublattice : std::uint8_t { A = 0, B = 1 };

struct DopantSite {
  double iy = 0.0;
  double ix = 0.0;
  double response_scale = 2.0;
};

/// Synthetic honeycomb 4D-STEM dataset. Lengths in the scan plane are scan
/// pixels; lengths on the detector are detector pixels.
struct SynthConfig {
  std::size_t ny = 64, nx = 64;
  std::size_t ky = 96, kx = 96;
  double pitch = 8.0;          ///< lattice constant (nearest A-A distance)
  double origin_y = 1.5, origin_x = 1.5;
  double rotation = 7.0;       ///< lattice rotation about the origin, degrees
  double disk_radius = 0.0;    ///< <= 0 selects min(ky, kx) / 6
  double edge_width = 1.0;     ///< logistic softness of the disk edge
  double disk_intensity = 1.0;
  double gain = 2.0;           ///< centroid shift at zero distance
  double range = 2.0;          ///< decay length of the shift magnitude
  double anisotropy = 0.6;     ///< core-region radius modulation per unit gain
  double halo = 0.02;          ///< on-atom high-angle ring intensity per unit gain
  double pedestal = 0.15;      ///< uniform diffuse level across the detector
  double core_fraction = 0.4;  ///< core radius as a fraction of pitch
  double taper = 0.0;          ///< deflection fades to 0 over taper * core radius beyond the core
  std::vector<DopantSite> dopants;
  double noise_sigma = 0.01;
  double blur_sigma = 0.0;
  std::uint64_t seed = 0;

  double resolved_disk_radius() const;
  double core_radius() const { return core_fraction * pitch; }
  /// Throws Errc::invalid_argument naming the violated invariant.
  void validate() const;
};

struct Atom {
  double y = 0.0, x = 0.0;
  Sublattice sublattice = Sublattice::A;
  bool dopant = false;
  double response_scale = 1.0;
};

/// Class ids: 0 background, 1..3 sublattice-A sectors, 4..6 sublattice-B sectors.
inline constexpr int kBackground = 0;
inline constexpr int kClassCount = 7;

/// Sector class paired with cls by the A/B mirror (sector center rotated 180 degrees).
int mirror_class(int cls);
/// Angle of the sector center in the lattice frame, degrees in [0, 360). The
/// scan-plane angle adds SynthConfig::rotation.
double sector_center_degrees(int cls);
bool is_sublattice_a(int cls);

class Lattice {
 public:
  explicit Lattice(const SynthConfig& cfg);

  struct Nearest {
    std::size_t index = 0;
    double dy = 0.0, dx = 0.0;  ///< probe position minus atom position
    double r = 0.0;
  };

  const std::vector<Atom>& atoms() const { return atoms_; }
  /// Ties between equidistant atoms go to the lowest atom index.
  Nearest nearest(double y, double x) const;
  /// Class of a probe position from geometry alone.
  int classify(const Nearest& near) const;

 private:
  std::vector<Atom> atoms_;
  double core_radius_;
  double rotation_;
};

struct GroundTruth {
  ScanShape scan;
  std::vector<Atom> atoms;
  std::vector<int> classes;
  std::vector<std::size_t> nearest_atom;
  std::vector<double> nearest_distance;
  std::vector<std::uint8_t> dopant_mask;

  Sublattice sublattice(std::size_t pixel) const { return atoms[nearest_atom[pixel]].sublattice; }
  /// Scan pixel closest to the position of each dopant atom, in dopant order.
  std::vector<ScanPosition> dopant_pixels() const;
};

struct SynthResult {
  ScanGrid4D data;
  GroundTruth truth;
};

/// Deterministic given cfg.seed; threads only affects speed.
SynthResult generate(const SynthConfig& cfg, unsigned threads = 1);

/// Centroid shift (dy, dx) in detector pixels applied at a scan position:
/// gain * exp(-r / range) toward the nearest atom, zero at r = 0. Beyond the
/// core radius the magnitude fades to 0 over taper * core radius.
std::array<double, 2> expected_deflection(const SynthConfig& cfg, const Lattice& lattice, double iy, double ix);
std::array<double, 2> expected_deflection(const SynthConfig& cfg, double iy, double ix);

/// Columns: iy, ix, class, sublattice, is_dopant.
void write_ground_truth_csv(const std::filesystem::path& path, const GroundTruth& truth);

}  // namespace stemml::synth
