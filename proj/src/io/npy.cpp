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

#include "stemml/io/npy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <regex>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stemml/core/error.hpp"

namespace stemml::io {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read in host order");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

DType parse_descr(const std::string& descr) {
  if (descr == "<f8") return DType::f8;
  if (descr == "<f4") return DType::f4;
  if (descr == "|u1" || descr == "<u1") return DType::u1;
  if (descr == "<u2") return DType::u2;
  if (descr == "<u4") return DType::u4;
  if (descr == "<u8") return DType::u8;
  if (descr == "<i4") return DType::i4;
  if (descr == "<i8") return DType::i8;
  fail(Errc::format, fmt::format("unsupported NPY descr '{}'", descr));
}

bool is_integral(DType t) { return t != DType::f8 && t != DType::f4; }

template <class Src, class Dst>
void convert_into(const char* raw, std::size_t count, std::vector<Dst>& out) {
  out.resize(count);
  if constexpr (std::is_same_v<Src, Dst>) {
    std::memcpy(out.data(), raw, count * sizeof(Src));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      Src v;
      std::memcpy(&v, raw + i * sizeof(Src), sizeof(Src));
      out[i] = static_cast<Dst>(v);
    }
  }
}

template <class T>
void read_payload(std::istream& in, const NpyHeader& header, std::vector<T>& out, const std::string& name) {
  const std::size_t count = header.element_count();
  const std::size_t bytes = count * dtype_size(header.dtype);
  if (header.dtype == dtype_of<T>()) {
    out.resize(count);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    require(static_cast<std::size_t>(in.gcount()) == bytes, Errc::format,
            fmt::format("{}: payload truncated (expected {} bytes)", name, bytes));
    return;
  }
  std::vector<char> raw(bytes);
  in.read(raw.data(), static_cast<std::streamsize>(bytes));
  require(static_cast<std::size_t>(in.gcount()) == bytes, Errc::format,
          fmt::format("{}: payload truncated (expected {} bytes)", name, bytes));
  switch (header.dtype) {
    case DType::f8: convert_into<double>(raw.data(), count, out); break;
    case DType::f4: convert_into<float>(raw.data(), count, out); break;
    case DType::u1: convert_into<std::uint8_t>(raw.data(), count, out); break;
    case DType::u2: convert_into<std::uint16_t>(raw.data(), count, out); break;
    case DType::u4: convert_into<std::uint32_t>(raw.data(), count, out); break;
    case DType::u8: convert_into<std::uint64_t>(raw.data(), count, out); break;
    case DType::i4: convert_into<std::int32_t>(raw.data(), count, out); break;
    case DType::i8: convert_into<std::int64_t>(raw.data(), count, out); break;
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  if (shape.size() == 1) return fmt::format("({},)", shape[0]);
  return fmt::format("({})", fmt::join(shape, ", "));
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f8: case DType::u8: case DType::i8: return 8;
    case DType::f4: case DType::u4: case DType::i4: return 4;
    case DType::u2: return 2;
    case DType::u1: return 1;
  }
  return 0;
}

std::string dtype_descr(DType t) {
  switch (t) {
    case DType::f8: return "<f8";
    case DType::f4: return "<f4";
    case DType::u1: return "|u1";
    case DType::u2: return "<u2";
    case DType::u4: return "<u4";
    case DType::u8: return "<u8";
    case DType::i4: return "<i4";
    case DType::i8: return "<i8";
  }
  return "";
}

NpyHeader read_npy_header(std::istream& in) {
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  require(in.gcount() == static_cast<std::streamsize>(kMagicLen) && std::memcmp(magic, kMagic, kMagicLen) == 0,
          Errc::format, "not an NPY file (bad magic)");
  unsigned char version[2];
  in.read(reinterpret_cast<char*>(version), 2);
  require(in.gcount() == 2, Errc::format, "truncated NPY version");
  std::size_t header_len = 0;
  std::size_t prefix = kMagicLen + 2;
  if (version[0] == 1) {
    unsigned char len[2];
    in.read(reinterpret_cast<char*>(len), 2);
    require(in.gcount() == 2, Errc::format, "truncated NPY header length");
    header_len = static_cast<std::size_t>(len[0]) | (static_cast<std::size_t>(len[1]) << 8);
    prefix += 2;
  } else if (version[0] == 2 || version[0] == 3) {
    unsigned char len[4];
    in.read(reinterpret_cast<char*>(len), 4);
    require(in.gcount() == 4, Errc::format, "truncated NPY header length");
    for (int b = 3; b >= 0; --b) header_len = (header_len << 8) | len[b];
    prefix += 4;
  } else {
    fail(Errc::format, fmt::format("unsupported NPY version {}.{}", version[0], version[1]));
  }
  std::string dict(header_len, '\0');
  in.read(dict.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<std::size_t>(in.gcount()) == header_len, Errc::format, "truncated NPY header");

  static const std::regex descr_re(R"(['"]descr['"]\s*:\s*['"]([^'"]*)['"])");
  static const std::regex fortran_re(R"(['"]fortran_order['"]\s*:\s*(True|False))");
  static const std::regex shape_re(R"(['"]shape['"]\s*:\s*\(([^)]*)\))");
  std::smatch m;
  NpyHeader header;
  require(std::regex_search(dict, m, descr_re), Errc::format, "NPY header lacks 'descr'");
  header.dtype = parse_descr(m[1].str());
  require(std::regex_search(dict, m, fortran_re), Errc::format, "NPY header lacks 'fortran_order'");
  require(m[1].str() == "False", Errc::format, "fortran_order=True arrays are not supported");
  require(std::regex_search(dict, m, shape_re), Errc::format, "NPY header lacks 'shape'");
  const std::string dims = m[1].str();
  static const std::regex int_re(R"(\s*(\d+)\s*)");
  std::size_t pos = 0;
  while (pos < dims.size()) {
    const std::size_t comma = dims.find(',', pos);
    const std::string token = dims.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (token.find_first_not_of(" \t") != std::string::npos) {
      require(std::regex_match(token, m, int_re), Errc::format, fmt::format("bad NPY shape entry '{}'", token));
      header.shape.push_back(static_cast<std::size_t>(std::stoull(m[1].str())));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  header.data_offset = prefix + header_len;
  return header;
}

std::string make_npy_header(DType dtype, std::span<const std::size_t> shape) {
  std::string dims;
  if (shape.size() == 1) {
    dims = fmt::format("{},", shape[0]);
  } else {
    dims = fmt::format("{}", fmt::join(shape, ", "));
  }
  std::string dict = fmt::format("{{'descr': '{}', 'fortran_order': False, 'shape': ({}), }}", dtype_descr(dtype), dims);
  const std::size_t unpadded = kMagicLen + 4 + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  require(dict.size() <= std::numeric_limits<std::uint16_t>::max(), Errc::format, "NPY header too long for v1.0");
  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xff));
  out.push_back(static_cast<char>((dict.size() >> 8) & 0xff));
  out += dict;
  return out;
}

template <class T>
void save_npy(const std::filesystem::path& path, std::span<const T> values, std::span<const std::size_t> shape) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  require(count == values.size(), Errc::shape,
          fmt::format("array of {} elements does not match shape {}", values.size(),
                      shape_string(std::vector<std::size_t>(shape.begin(), shape.end()))));
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, fmt::format("cannot open {} for writing", path.string()));
  const std::string header = make_npy_header(dtype_of<T>(), shape);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  out.close();
  require(!out.fail(), Errc::io, fmt::format("write to {} failed", path.string()));
}

template <class T>
NdArray<T> load_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, fmt::format("cannot open {}", path.string()));
  const NpyHeader header = read_npy_header(in);
  if constexpr (std::is_integral_v<T>) {
    require(is_integral(header.dtype), Errc::format,
            fmt::format("{}: floating payload cannot be loaded as integers", path.string()));
  }
  NdArray<T> array;
  array.shape = header.shape;
  read_payload(in, header, array.data, path.string());
  return array;
}

#define STEMML_NPY_INSTANTIATE(T)                                                                               \
  template void save_npy<T>(const std::filesystem::path&, std::span<const T>, std::span<const std::size_t>); \
  template NdArray<T> load_npy<T>(const std::filesystem::path&);

STEMML_NPY_INSTANTIATE(double)
STEMML_NPY_INSTANTIATE(float)
STEMML_NPY_INSTANTIATE(std::uint8_t)
STEMML_NPY_INSTANTIATE(std::uint16_t)
STEMML_NPY_INSTANTIATE(std::uint32_t)
STEMML_NPY_INSTANTIATE(std::uint64_t)
STEMML_NPY_INSTANTIATE(std::int32_t)
STEMML_NPY_INSTANTIATE(std::int64_t)
#undef STEMML_NPY_INSTANTIATE

void check_shape(const std::vector<std::size_t>& shape, const ShapeSpec& expected, const std::string& what) {
  if (expected.empty()) return;
  bool ok = shape.size() == expected.size();
  for (std::size_t i = 0; ok && i < shape.size(); ++i) {
    if (expected[i] && *expected[i] != shape[i]) ok = false;
  }
  if (!ok) {
    std::vector<std::string> parts;
    for (const auto& e : expected) parts.push_back(e ? std::to_string(*e) : "*");
    fail(Errc::shape, fmt::format("{}: shape {} does not match expected ({})", what, shape_string(shape),
                                  fmt::join(parts, ", ")));
  }
}

void save_array(const std::filesystem::path& path, const Array& array) {
  for (double v : array.data) {
    require(std::isfinite(v), Errc::validation, fmt::format("{}: refusing to save non-finite values", path.string()));
  }
  save_npy(path, array);
}

Array load_array(const std::filesystem::path& path, const ShapeSpec& expected) {
  Array array = load_npy<double>(path);
  check_shape(array.shape, expected, path.string());
  return array;
}

}  // namespace stemml::io
