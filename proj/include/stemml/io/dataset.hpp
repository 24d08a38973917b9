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
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stemml/core/points.hpp"

namespace stemml {

struct ScanShape {
  std::size_t ny = 0;
  std::size_t nx = 0;

  std::size_t size() const { return ny * nx; }
  bool operator==(const ScanShape&) const = default;
};

struct ScanPosition {
  std::size_t iy = 0;
  std::size_t ix = 0;
  bool operator==(const ScanPosition&) const = default;
};

/// Row index <-> scan position bijection, i = iy * nx + ix.
inline ScanPosition scan_position(std::size_t index, std::size_t nx) { return {index / nx, index % nx}; }
inline std::size_t scan_index(ScanPosition pos, std::size_t nx) { return pos.iy * nx + pos.ix; }

/// Raw 4D dataset indexed (scan-y, scan-x, detector-y, detector-x). Storage is
/// shared and immutable, so copies and flatten() are cheap.
class ScanGrid4D {
 public:
  ScanGrid4D() = default;
  /// Validates extents and that every value is finite.
  ScanGrid4D(std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx, std::vector<double> values);

  std::size_t ny() const { return ny_; }
  std::size_t nx() const { return nx_; }
  std::size_t ky() const { return ky_; }
  std::size_t kx() const { return kx_; }
  ScanShape scan_shape() const { return {ny_, nx_}; }
  std::size_t frame_size() const { return ky_ * kx_; }
  std::size_t frame_count() const { return ny_ * nx_; }
  std::array<std::size_t, 4> shape() const { return {ny_, nx_, ky_, kx_}; }

  double at(std::size_t iy, std::size_t ix, std::size_t qy, std::size_t qx) const {
    return (*values_)[((iy * nx_ + ix) * ky_ + qy) * kx_ + qx];
  }
  std::span<const double> frame(std::size_t iy, std::size_t ix) const {
    return {values_->data() + (iy * nx_ + ix) * frame_size(), frame_size()};
  }
  std::span<const double> frame(std::size_t index) const {
    return {values_->data() + index * frame_size(), frame_size()};
  }
  std::span<const double> values() const { return *values_; }
  const std::shared_ptr<const std::vector<double>>& storage() const { return values_; }

 private:
  friend class FlatDataset;
  friend ScanGrid4D unflatten(const class FlatDataset&, std::size_t, std::size_t);
  struct shared_tag {};
  ScanGrid4D(shared_tag, std::size_t ny, std::size_t nx, std::size_t ky, std::size_t kx,
             std::shared_ptr<const std::vector<double>> values);

  std::size_t ny_ = 0, nx_ = 0, ky_ = 0, kx_ = 0;
  std::shared_ptr<const std::vector<double>> values_ = std::make_shared<std::vector<double>>();
};

/// n points in R^p with the scan shape retained for the inverse mapping.
class FlatDataset {
 public:
  FlatDataset() = default;

  std::size_t n() const { return scan_.size(); }
  std::size_t p() const { return p_; }
  ScanShape scan_shape() const { return scan_; }
  std::span<const double> row(std::size_t i) const { return {values_->data() + i * p_, p_}; }
  std::span<const double> values() const { return *values_; }
  PointsView view() const { return {values_->data(), n(), p_}; }
  const std::shared_ptr<const std::vector<double>>& storage() const { return values_; }

 private:
  friend FlatDataset flatten(const ScanGrid4D& grid);
  ScanShape scan_{};
  std::size_t p_ = 0;
  std::shared_ptr<const std::vector<double>> values_ = std::make_shared<std::vector<double>>();
};

/// Shares storage with grid; rows are frames unrolled in detector row-major order.
FlatDataset flatten(const ScanGrid4D& grid);
ScanGrid4D unflatten(const FlatDataset& data, std::size_t ky, std::size_t kx);

using AxisOrder = std::array<int, 4>;
inline constexpr AxisOrder kCanonicalAxes{0, 1, 2, 3};

/// Output axis a is read from file axis axes[a]. Accepts integers ("2,3,0,1")
/// or the names of the file axes in file order ("qy,qx,iy,ix").
AxisOrder parse_axis_order(const std::string& text);

/// Reads a 4D NPY file (f8, f4, or unsigned integer payloads). Integer counts
/// are converted to float64.
ScanGrid4D load_npy_4d(const std::filesystem::path& path, const AxisOrder& axes = kCanonicalAxes);
void save_npy_4d(const std::filesystem::path& path, const ScanGrid4D& grid);

/// Scales each frame to unit sum; all-zero frames are left unchanged.
ScanGrid4D normalize_frames(const ScanGrid4D& grid);

/// Row-major mean over all frames (length ky*kx).
std::vector<double> global_mean_frame(const FlatDataset& data);

}  // namespace stemml
