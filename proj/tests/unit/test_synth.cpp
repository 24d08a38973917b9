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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "stemml/core/error.hpp"
#include "stemml/synth/synth.hpp"

using namespace stemml;
using namespace stemml::synth;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.ny = cfg.nx = 16;
  cfg.ky = cfg.kx = 48;
  cfg.noise_sigma = 0.0;
  return cfg;
}

// Intensity-weighted centroid relative to the geometric detector midpoint.
std::array<double, 2> centroid(std::span<const double> f, std::size_t ky, std::size_t kx) {
  double m = 0, sy = 0, sx = 0;
  for (std::size_t y = 0; y < ky; ++y)
    for (std::size_t x = 0; x < kx; ++x) {
      const double v = f[y * kx + x];
      m += v;
      sy += v * static_cast<double>(y);
      sx += v * static_cast<double>(x);
    }
  return {sy / m - 0.5 * (static_cast<double>(ky) - 1), sx / m - 0.5 * (static_cast<double>(kx) - 1)};
}

}  // namespace

TEST_CASE("honeycomb neighbours sit one bond length away at 120 degree spacing") {
  const SynthConfig cfg = small_config();
  const Lattice lat(cfg);
  const double bond = cfg.pitch / std::sqrt(3.0);
  for (const Atom& a : lat.atoms()) {
    if (a.y < 4 || a.y > 12 || a.x < 4 || a.x > 12) continue;
    int neighbours = 0;
    for (const Atom& b : lat.atoms()) {
      const double d = std::hypot(a.y - b.y, a.x - b.x);
      if (std::abs(d - bond) < 1e-9) {
        ++neighbours;
        CHECK(a.sublattice != b.sublattice);
      }
      if (&a != &b) CHECK(d > bond - 1e-9);
    }
    CHECK(neighbours == 3);
  }
}

TEST_CASE("labels follow the nearest-atom geometry") {
  const SynthConfig cfg = small_config();
  const SynthResult r = generate(cfg);
  const Lattice lat(cfg);
  for (std::size_t i = 0; i < r.truth.classes.size(); ++i) {
    const ScanPosition pos = scan_position(i, cfg.nx);
    const auto near = lat.nearest(static_cast<double>(pos.iy), static_cast<double>(pos.ix));
    const int cls = r.truth.classes[i];
    if (near.r > 0.4 * cfg.pitch) {
      CHECK(cls == kBackground);
      continue;
    }
    REQUIRE(cls != kBackground);
    CHECK(is_sublattice_a(cls) == (lat.atoms()[near.index].sublattice == Sublattice::A));
    if (near.r == 0.0) continue;
    // Within 60 degrees of the sector center.
    const double angle = std::atan2(near.dy, near.dx) * 180.0 / std::numbers::pi;
    double diff = std::fmod(std::abs(angle - sector_center_degrees(cls) - cfg.rotation), 360.0);
    diff = std::min(diff, 360.0 - diff);
    CHECK(diff <= 60.0 + 1e-9);
  }
  const std::set<int> seen(r.truth.classes.begin(), r.truth.classes.end());
  CHECK(seen.size() == static_cast<std::size_t>(kClassCount));
}

TEST_CASE("mirror classes pair A and B sectors with opposite centers") {
  for (int c = 1; c <= 6; ++c) {
    const int m = mirror_class(c);
    CHECK(mirror_class(m) == c);
    CHECK(is_sublattice_a(c) != is_sublattice_a(m));
    const double d = std::fmod(std::abs(sector_center_degrees(c) - sector_center_degrees(m)), 360.0);
    CHECK(d == doctest::Approx(180.0));
  }
}

TEST_CASE("translation by one unit cell leaves labels unchanged") {
  SynthConfig a = small_config();
  // Lattice vectors rotate with the lattice.
  const double cr = std::cos(a.rotation * std::numbers::pi / 180.0);
  const double sr = std::sin(a.rotation * std::numbers::pi / 180.0);
  SynthConfig b = a;
  b.origin_y += sr * a.pitch;
  b.origin_x += cr * a.pitch;
  SynthConfig c = a;
  const double ly = a.pitch * std::sqrt(3.0) / 2.0, ux = 0.5 * a.pitch;
  c.origin_y += cr * ly + sr * ux;
  c.origin_x += -sr * ly + cr * ux;
  const Lattice la(a), lb(b), lc(c);
  for (std::size_t iy = 0; iy < a.ny; ++iy)
    for (std::size_t ix = 0; ix < a.nx; ++ix) {
      const auto na = la.nearest(double(iy), double(ix));
      CHECK(la.classify(na) == lb.classify(lb.nearest(double(iy), double(ix))));
      CHECK(la.classify(na) == lc.classify(lc.nearest(double(iy), double(ix))));
    }
}

TEST_CASE("noise-free centroid equals the expected deflection") {
  SynthConfig cfg = small_config();
  cfg.dopants = {{8.0, 8.0, 1.7}};
  const SynthResult r = generate(cfg);
  const Lattice lat(cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.data.frame_count(); ++i) {
    const ScanPosition pos = scan_position(i, cfg.nx);
    const auto c = centroid(r.data.frame(i), cfg.ky, cfg.kx);
    const auto e = expected_deflection(cfg, lat, double(pos.iy), double(pos.ix));
    worst = std::max({worst, std::abs(c[0] - e[0]), std::abs(c[1] - e[1])});
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("deflection points at the nearest atom and vanishes on it") {
  const SynthConfig cfg = small_config();
  const Lattice lat(cfg);
  const Atom& a = lat.atoms()[lat.nearest(8, 8).index];
  const auto on = expected_deflection(cfg, lat, a.y, a.x);
  CHECK(on[0] == 0.0);
  CHECK(on[1] == 0.0);
  const auto off = expected_deflection(cfg, lat, a.y + 1.0, a.x);
  CHECK(off[0] == doctest::Approx(-cfg.gain * std::exp(-1.0 / cfg.range)));
  CHECK(off[1] == doctest::Approx(0.0));
}

TEST_CASE("equidistant atoms break ties toward the lower index") {
  const SynthConfig cfg = small_config();
  const Lattice lat(cfg);
  const auto& atoms = lat.atoms();
  const std::size_t ia = lat.nearest(8, 8).index;
  const double bond = cfg.pitch / std::sqrt(3.0);
  std::size_t ib = ia;
  for (std::size_t j = 0; j < atoms.size(); ++j)
    if (std::abs(std::hypot(atoms[j].y - atoms[ia].y, atoms[j].x - atoms[ia].x) - bond) < 1e-9) ib = j;
  REQUIRE(ib != ia);
  const double my = 0.5 * (atoms[ia].y + atoms[ib].y), mx = 0.5 * (atoms[ia].x + atoms[ib].x);
  const std::size_t winner = lat.nearest(my, mx).index;
  CHECK(winner == std::min(ia, ib));
  const auto v = expected_deflection(cfg, lat, my, mx);
  const double ty = atoms[winner].y - my, tx = atoms[winner].x - mx;
  CHECK(v[0] * ty + v[1] * tx > 0.0);
}

TEST_CASE("zero gain and zero noise give identical frames") {
  SynthConfig cfg = small_config();
  cfg.gain = 0.0;
  const SynthResult r = generate(cfg);
  for (std::size_t i = 1; i < r.data.frame_count(); ++i) {
    const auto f0 = r.data.frame(0), fi = r.data.frame(i);
    REQUIRE(std::equal(f0.begin(), f0.end(), fi.begin()));
  }
}

TEST_CASE("generation is deterministic and thread-count independent") {
  SynthConfig cfg = small_config();
  cfg.noise_sigma = 0.02;
  cfg.blur_sigma = 1.0;
  cfg.seed = 11;
  const SynthResult a = generate(cfg, 1), b = generate(cfg, 3);
  CHECK(std::equal(a.data.values().begin(), a.data.values().end(), b.data.values().begin()));
  cfg.seed = 12;
  const SynthResult c = generate(cfg, 1);
  CHECK_FALSE(std::equal(a.data.values().begin(), a.data.values().end(), c.data.values().begin()));
}

TEST_CASE("dopant frames are scaled and marked") {
  SynthConfig cfg = small_config();
  const SynthResult plain = generate(cfg);
  cfg.dopants = {{8.3, 7.9, 2.0}};
  const SynthResult doped = generate(cfg);
  std::size_t marked = 0;
  for (std::size_t i = 0; i < doped.truth.dopant_mask.size(); ++i) {
    const double ratio = doped.data.frame(i)[5] / plain.data.frame(i)[5];
    if (doped.truth.dopant_mask[i]) {
      ++marked;
      CHECK(ratio == doctest::Approx(2.0));
    } else {
      CHECK(ratio == doctest::Approx(1.0));
    }
  }
  CHECK(marked > 0);
  const auto pix = doped.truth.dopant_pixels();
  REQUIRE(pix.size() == 1);
  CHECK(doped.truth.dopant_mask[scan_index(pix[0], cfg.nx)] == 1);
}

TEST_CASE("invalid configurations are rejected") {
  auto code = [](SynthConfig cfg) {
    try {
      cfg.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::internal;
  };
  SynthConfig cfg = small_config();
  cfg.disk_radius = 24.0;
  CHECK(code(cfg) == Errc::invalid_argument);
  cfg = small_config();
  cfg.gain = -1.0;
  CHECK(code(cfg) == Errc::invalid_argument);
  cfg = small_config();
  cfg.noise_sigma = -0.1;
  CHECK(code(cfg) == Errc::invalid_argument);
  cfg = small_config();
  cfg.pitch = 0.0;
  CHECK(code(cfg) == Errc::invalid_argument);
}
