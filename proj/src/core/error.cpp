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

#include "stemml/core/error.hpp"

namespace stemml {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::io: return "I/O error";
    case Errc::format: return "format error";
    case Errc::shape: return "shape error";
    case Errc::validation: return "validation error";
    case Errc::not_found: return "not found";
    case Errc::numerical: return "numerical failure";
    case Errc::busy: return "busy";
    case Errc::internal: return "internal error";
  }
  return "unknown error";
}

}  // namespace stemml
