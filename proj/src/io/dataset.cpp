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

#include "stemml/io/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "stemml/io/npy.hpp"

namespace stemml {

namespace {

void validate_extents(std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx) {
  require(ny * nx >= 1, Errc::shape, fmt::format("scan grid {}x{} is empty", ny, nx));
  require(ky * kx >= 1, Errc::shape, fmt::format("detector frame {}x{} is empty", ky, kx));
}

void validate_finite(const std::vector<double>& values, std::size_t nx, std::size_t ky, std::size_t kx) {
  const auto bad = std::find_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); });
  if (bad == values.end()) return;
  std::size_t flat = static_cast<std::size_t>(bad - values.begin());
  const std::size_t qx = flat % kx;
  flat /= kx;
  const std::size_t qy = flat % ky;
  flat /= ky;
  const std::size_t ix = flat % nx;
  const std::size_t iy = flat / nx;
  fail(Errc::validation, fmt::format("non-finite intensity {} at index ({}, {}, {}, {})", *bad, iy, ix, qy, qx));
}

}  // namespace

ScanGrid4D::ScanGrid4D(std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx, std::vector<double> values)
    : ny_(ny), nx_(nx), ky_(ky), kx_(kx) {
  validate_extents(ny, nx, ky, kx);
  require(values.size() == ny * nx * ky * kx, Errc::shape,
          fmt::format("{} values do not fill a ({}, {}, {}, {}) grid", values.size(), ny, nx, ky, kx));
  validate_finite(values, nx, ky, kx);
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

ScanGrid4D::ScanGrid4D(shared_tag, std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx,
                       std::shared_ptr<const std::vector<double>> values)
    : ny_(ny), nx_(nx), ky_(ky), kx_(kx), values_(std::move(values)) {}

FlatDataset flatten(const ScanGrid4D& grid) {
  FlatDataset flat;
  flat.scan_ = grid.scan_shape();
  flat.p_ = grid.frame_size();
  flat.values_ = grid.storage();
  return flat;
}

ScanGrid4D unflatten(const FlatDataset& data, std::size_t ky, std::size_t kx) {
  require(ky * kx == data.p(), Errc::shape,
          fmt::format("detector {}x{} does not match row length {}", ky, kx, data.p()));
  validate_extents(data.scan_shape().ny, data.scan_shape().nx, ky, kx);
  return ScanGrid4D(ScanGrid4D::shared_tag{}, data.scan_shape().ny, data.scan_shape().nx, ky, kx, data.storage());
}

AxisOrder parse_axis_order(const std::string& text) {
  static constexpr std::array<std::string_view, 4> kNames{"iy", "ix", "qy", "qx"};
  std::vector<std::string> tokens;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token.erase(std::remove_if(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); }), token.end());
    tokens.push_back(token);
  }
  require(tokens.size() == 4, Errc::invalid_argument, fmt::format("axis order '{}' must list 4 axes", text));
  AxisOrder axes{-1, -1, -1, -1};
  const bool named = std::find(kNames.begin(), kNames.end(), tokens[0]) != kNames.end();
  for (std::size_t f = 0; f < 4; ++f) {
    if (named) {
      // Names describe file axes: file axis f holds the named canonical axis.
      const auto it = std::find(kNames.begin(), kNames.end(), tokens[f]);
      require(it != kNames.end(), Errc::invalid_argument, fmt::format("axis order '{}': unknown axis '{}'", text, tokens[f]));
      axes[static_cast<std::size_t>(it - kNames.begin())] = static_cast<int>(f);
    } else {
      try {
        axes[f] = std::stoi(tokens[f]);
      } catch (const std::exception&) {
        fail(Errc::invalid_argument, fmt::format("axis order '{}' is neither axis names nor integers", text));
      }
    }
  }
  AxisOrder sorted = axes;
  std::sort(sorted.begin(), sorted.end());
  require(sorted == kCanonicalAxes, Errc::invalid_argument, fmt::format("axis order '{}' is not a permutation", text));
  return axes;
}

ScanGrid4D load_npy_4d(const std::filesystem::path& path, const AxisOrder& axes) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, fmt::format("cannot open {}", path.string()));
  const io::NpyHeader header = io::read_npy_header(in);
  require(header.shape.size() == 4, Errc::shape,
          fmt::format("{}: expected a 4D array, found shape {}", path.string(), io::shape_string(header.shape)));
  require(header.dtype == io::DType::f8 || header.dtype == io::DType::f4 || header.dtype == io::DType::u1 ||
              header.dtype == io::DType::u2 || header.dtype == io::DType::u4 || header.dtype == io::DType::u8,
          Errc::format, fmt::format("{}: element type {} is not float or unsigned", path.string(),
                                    io::dtype_descr(header.dtype)));
  in.close();
  io::Array raw = io::load_npy<double>(path);

  if (axes == kCanonicalAxes) {
    const auto& s = raw.shape;
    return ScanGrid4D(s[0], s[1], s[2], s[3], std::move(raw.data));
  }
  std::array<std::size_t, 4> in_shape{raw.shape[0], raw.shape[1], raw.shape[2], raw.shape[3]};
  std::array<std::size_t, 4> in_stride{in_shape[1] * in_shape[2] * in_shape[3], in_shape[2] * in_shape[3], in_shape[3], 1};
  std::array<std::size_t, 4> out_shape{};
  std::array<std::size_t, 4> src_stride{};
  for (int a = 0; a < 4; ++a) {
    out_shape[a] = in_shape[axes[a]];
    src_stride[a] = in_stride[axes[a]];
  }
  std::vector<double> out(raw.size());
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < out_shape[0]; ++i0)
    for (std::size_t i1 = 0; i1 < out_shape[1]; ++i1)
      for (std::size_t i2 = 0; i2 < out_shape[2]; ++i2)
        for (std::size_t i3 = 0; i3 < out_shape[3]; ++i3)
          out[o++] = raw.data[i0 * src_stride[0] + i1 * src_stride[1] + i2 * src_stride[2] + i3 * src_stride[3]];
  return ScanGrid4D(out_shape[0], out_shape[1], out_shape[2], out_shape[3], std::move(out));
}

void save_npy_4d(const std::filesystem::path& path, const ScanGrid4D& grid) {
  const auto shape = grid.shape();
  io::save_npy<double>(path, grid.values(), std::span<const std::size_t>(shape));
}

ScanGrid4D normalize_frames(const ScanGrid4D& grid) {
  std::vector<double> out(grid.values().begin(), grid.values().end());
  const std::size_t p = grid.frame_size();
  for (std::size_t f = 0; f < grid.frame_count(); ++f) {
    double sum = 0.0;
    for (std::size_t q = 0; q < p; ++q) sum += out[f * p + q];
    if (sum == 0.0) continue;
    for (std::size_t q = 0; q < p; ++q) out[f * p + q] /= sum;
  }
  return ScanGrid4D(grid.ny(), grid.nx(), grid.ky(), grid.kx(), std::move(out));
}

std::vector<double> global_mean_frame(const FlatDataset& data) {
  std::vector<double> mean(data.p(), 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto row = data.row(i);
    for (std::size_t q = 0; q < data.p(); ++q) mean[q] += row[q];
  }
  for (double& v : mean) v /= static_cast<double>(data.n());
  return mean;
}

}  // namespace stemml
