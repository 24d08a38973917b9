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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>

#include "stemml/core/error.hpp"
#include "stemml/io/dataset.hpp"
#include "stemml/io/npy.hpp"

namespace fs = std::filesystem;
using namespace stemml;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "stemml_unit";
  fs::create_directories(dir);
  return dir / name;
}

ScanGrid4D ramp_grid(std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx) {
  std::vector<double> v(ny * nx * ky * kx);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 97) * 0.5;
  return ScanGrid4D(ny, nx, ky, kx, std::move(v));
}

bool same_values(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

Errc error_code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::internal;
}

}  // namespace

TEST_CASE("npy header round trip pads to a 64-byte boundary") {
  const std::vector<std::size_t> shape{3, 4, 5};
  const std::string header = io::make_npy_header(io::DType::f4, shape);
  CHECK(header.size() % 64 == 0);
  std::istringstream in(header);
  const io::NpyHeader parsed = io::read_npy_header(in);
  CHECK(parsed.dtype == io::DType::f4);
  CHECK(parsed.shape == shape);
  CHECK(parsed.data_offset == header.size());
}

TEST_CASE("npy round trip preserves float64 exactly") {
  io::Array a;
  a.shape = {2, 3};
  a.data = {0.1, -2.5, 1e300, 3.0, std::nextafter(1.0, 2.0), 0.0};
  const fs::path p = temp_path("rt.npy");
  io::save_array(p, a);
  CHECK(io::load_array(p) == a);
  CHECK(io::load_array(p, {std::nullopt, 3}).shape == a.shape);
  CHECK(error_code_of([&] { io::load_array(p, {std::nullopt, 4}); }) == Errc::shape);
}

TEST_CASE("save_array rejects non-finite values") {
  io::Array a;
  a.shape = {2};
  a.data = {1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK(error_code_of([&] { io::save_array(temp_path("nan.npy"), a); }) == Errc::validation);
}

TEST_CASE("truncated and malformed files fail with format errors") {
  const fs::path p = temp_path("bad.npy");
  { std::ofstream(p) << "not a numpy file"; }
  CHECK(error_code_of([&] { io::load_array(p); }) == Errc::format);

  io::Array a;
  a.shape = {16};
  a.data.assign(16, 1.0);
  const fs::path q = temp_path("trunc.npy");
  io::save_array(q, a);
  fs::resize_file(q, fs::file_size(q) - 8);
  CHECK(error_code_of([&] { io::load_array(q); }) == Errc::format);
  CHECK(error_code_of([&] { io::load_array(temp_path("missing.npy")); }) == Errc::io);
}

TEST_CASE("4D round trip is bit-exact") {
  const ScanGrid4D g = ramp_grid(3, 4, 5, 6);
  const fs::path p = temp_path("g4.npy");
  save_npy_4d(p, g);
  const ScanGrid4D back = load_npy_4d(p);
  CHECK(back.shape() == g.shape());
  CHECK(same_values(back.values(), g.values()));
}

TEST_CASE("flatten then unflatten is the identity and shares storage") {
  const ScanGrid4D g = ramp_grid(2, 3, 4, 5);
  const FlatDataset f = flatten(g);
  CHECK(f.n() == 6);
  CHECK(f.p() == 20);
  CHECK(f.storage().get() == g.storage().get());
  CHECK(f.row(4)[7] == g.at(1, 1, 1, 2));
  const ScanGrid4D back = unflatten(f, 4, 5);
  CHECK(same_values(back.values(), g.values()));
  CHECK(error_code_of([&] { unflatten(f, 5, 5); }) == Errc::shape);
}

TEST_CASE("permuted axis order is reordered to canonical") {
  // Stored as (qy, qx, iy, ix).
  const std::size_t ny = 2, nx = 3, ky = 4, kx = 5;
  io::NdArray<float> raw;
  raw.shape = {ky, kx, ny, nx};
  raw.data.resize(ny * nx * ky * kx);
  auto value = [](std::size_t iy, std::size_t ix, std::size_t qy, std::size_t qx) {
    return static_cast<float>(1000 * iy + 100 * ix + 10 * qy + qx);
  };
  for (std::size_t qy = 0; qy < ky; ++qy)
    for (std::size_t qx = 0; qx < kx; ++qx)
      for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix) raw.data[((qy * kx + qx) * ny + iy) * nx + ix] = value(iy, ix, qy, qx);
  const fs::path p = temp_path("perm.npy");
  io::save_npy(p, raw);
  const ScanGrid4D g = load_npy_4d(p, parse_axis_order("qy,qx,iy,ix"));
  CHECK(g.ny() == ny);
  CHECK(g.kx() == kx);
  CHECK(g.at(1, 2, 3, 4) == value(1, 2, 3, 4));
  CHECK(g.at(0, 1, 2, 0) == value(0, 1, 2, 0));
}

TEST_CASE("non-finite input names the offending index") {
  std::vector<double> v(2 * 2 * 2 * 2, 1.0);
  v[1 * 8 + 0 * 4 + 1 * 2 + 0] = std::numeric_limits<double>::infinity();
  try {
    ScanGrid4D(2, 2, 2, 2, std::move(v));
    FAIL("expected validation failure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::validation);
    CHECK(std::string(e.what()).find("(1, 0, 1, 0)") != std::string::npos);
  }
}

TEST_CASE("non-4D arrays are rejected with a shape error") {
  io::Array a;
  a.shape = {4, 4, 4};
  a.data.assign(64, 0.0);
  const fs::path p = temp_path("three.npy");
  io::save_array(p, a);
  CHECK(error_code_of([&] { load_npy_4d(p); }) == Errc::shape);
}

TEST_CASE("unsigned integer detectors load as float64") {
  io::NdArray<std::uint16_t> raw;
  raw.shape = {1, 2, 2, 2};
  raw.data = {0, 1, 2, 3, 65535, 5, 6, 7};
  const fs::path p = temp_path("u16.npy");
  io::save_npy(p, raw);
  const ScanGrid4D g = load_npy_4d(p);
  CHECK(g.at(0, 1, 0, 0) == 65535.0);
}

TEST_CASE("normalized frames sum to one") {
  const ScanGrid4D g = normalize_frames(ramp_grid(2, 2, 3, 3));
  for (std::size_t i = 0; i < g.frame_count(); ++i) {
    double s = 0.0;
    for (double v : g.frame(i)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}
