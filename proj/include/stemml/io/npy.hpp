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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stemml/io/array.hpp"

namespace stemml::io {

enum class DType : std::uint8_t { f8, f4, u1, u2, u4, u8, i4, i8 };

std::size_t dtype_size(DType t);
std::string dtype_descr(DType t);

struct NpyHeader {
  DType dtype = DType::f8;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;

  std::size_t element_count() const { return NdArray<double>::element_count(shape); }
};

/// Parses magic, version, and the header dict. Leaves the stream positioned at
/// the first payload byte. Malformed input and fortran_order=True raise
/// Errc::format.
NpyHeader read_npy_header(std::istream& in);

/// Version 1.0 header (magic through trailing newline), padded to 64 bytes.
std::string make_npy_header(DType dtype, std::span<const std::size_t> shape);

template <class T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<double>() { return DType::f8; }
template <> constexpr DType dtype_of<float>() { return DType::f4; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::u1; }
template <> constexpr DType dtype_of<std::uint16_t>() { return DType::u2; }
template <> constexpr DType dtype_of<std::uint32_t>() { return DType::u4; }
template <> constexpr DType dtype_of<std::uint64_t>() { return DType::u8; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::i4; }
template <> constexpr DType dtype_of<std::int64_t>() { return DType::i8; }

template <class T>
void save_npy(const std::filesystem::path& path, std::span<const T> values, std::span<const std::size_t> shape);

template <class T>
void save_npy(const std::filesystem::path& path, const NdArray<T>& array) {
  save_npy<T>(path, std::span<const T>(array.data), std::span<const std::size_t>(array.shape));
}

/// Loads any supported dtype and converts to T. Floating payloads cannot be
/// loaded into integer arrays.
template <class T>
NdArray<T> load_npy(const std::filesystem::path& path);

/// float64 1D/2D/3D array persistence; the shape check throws Errc::shape.
void save_array(const std::filesystem::path& path, const Array& array);
Array load_array(const std::filesystem::path& path, const ShapeSpec& expected = {});

void check_shape(const std::vector<std::size_t>& shape, const ShapeSpec& expected, const std::string& what);

}  // namespace stemml::io
