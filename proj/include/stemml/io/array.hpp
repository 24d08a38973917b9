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

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace stemml::io {

/// Dense C-order array with an explicit shape.
template <class T>
struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  NdArray() = default;
  NdArray(std::vector<std::size_t> dims, std::vector<T> values) : shape(std::move(dims)), data(std::move(values)) {}
  explicit NdArray(std::vector<std::size_t> dims)
      : shape(std::move(dims)), data(element_count(shape), T{}) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  bool operator==(const NdArray&) const = default;
};

using Array = NdArray<double>;

/// Wildcard-capable shape expectation; std::nullopt matches any extent.
using ShapeSpec = std::vector<std::optional<std::size_t>>;

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace stemml::io
