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

#include "stemml/render/png.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include <fmt/format.h>
#include <png.h>

#include "stemml/core/error.hpp"

namespace stemml::render {

const std::array<Rgb, 256>& colormap() {
  static const std::array<Rgb, 256> table{{
#include "viridis.inc"
  }};
  return table;
}

Image render_scalar(const analysis::SpatialMap& map, const ScaleOptions& options) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : map.values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (options.vmin) lo = *options.vmin;
  if (options.vmax) hi = *options.vmax;
  require(!(options.vmin && options.vmax) || lo < hi, Errc::invalid_argument,
          fmt::format("vmin {} must be below vmax {}", lo, hi));
  Image img{map.ny, map.nx, std::vector<std::uint8_t>(map.ny * map.nx * 3)};
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double v = map.values[i];
    Rgb c = kNoiseColor;
    if (std::isfinite(v)) {
      const double t = std::clamp((v - lo) / span, 0.0, 1.0);
      c = colormap()[static_cast<std::size_t>(std::lround(255.0 * t))];
    }
    std::copy(c.begin(), c.end(), img.rgb.begin() + 3 * i);
  }
  return img;
}

Image render_labels(const analysis::SpatialMap& labels) {
  double top = 0.0;
  for (double v : labels.values) top = std::max(top, v);
  Image img{labels.ny, labels.nx, std::vector<std::uint8_t>(labels.ny * labels.nx * 3)};
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    const double v = labels.values[i];
    Rgb c = kNoiseColor;
    if (v >= 0.0) c = colormap()[top > 0.0 ? static_cast<std::size_t>(std::lround(255.0 * v / top)) : 0];
    std::copy(c.begin(), c.end(), img.rgb.begin() + 3 * i);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.height > 0 && image.width > 0 && image.rgb.size() == image.height * image.width * 3, Errc::shape,
          "image buffer does not match its extents");
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(file != nullptr, Errc::io, fmt::format("cannot open {} for writing", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::internal, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::io, fmt::format("failed writing {}", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < image.height; ++r)
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + r * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace stemml::render
