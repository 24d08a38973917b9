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
#include <optional>
#include <vector>

#include "stemml/analysis/analysis.hpp"

namespace stemml::render {

using Rgb = std::array<std::uint8_t, 3>;

/// Viridis, 256 entries.
const std::array<Rgb, 256>& colormap();
/// Color used for noise labels.
inline constexpr Rgb kNoiseColor{128, 128, 128};

struct Image {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  ///< row-major, 3 bytes per pixel
};

struct ScaleOptions {
  std::optional<double> vmin, vmax;  ///< min-max of finite values when unset
};

/// Linear scaling clamped to [vmin, vmax]; non-finite values render as noise.
Image render_scalar(const analysis::SpatialMap& map, const ScaleOptions& options = {});
/// Label l of m clusters takes colormap entry round(255 l / (m - 1)); -1 is grey.
Image render_labels(const analysis::SpatialMap& labels);

void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace stemml::render
