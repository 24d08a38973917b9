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

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "stemml/core/error.hpp"

namespace stemml::io {

/// Comma-separated writer with a one-line header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view header) : out_(path) {
    require(out_.good(), Errc::io, fmt::format("cannot open {} for writing", path.string()));
    out_ << header << '\n';
  }

  template <class... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << format_field(fields), first = false), ...);
    out_ << '\n';
  }

  void close() {
    out_.close();
    require(!out_.fail(), Errc::io, "CSV write failed");
  }

 private:
  template <class T>
  static std::string format_field(const T& value) {
    if constexpr (std::is_floating_point_v<T>) {
      return fmt::format("{:.17g}", value);
    } else {
      return fmt::format("{}", value);
    }
  }

  std::ofstream out_;
};

}  // namespace stemml::io
