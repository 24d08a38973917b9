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

#include <map>
#include <unordered_map>

#include "stemml/cluster/cluster.hpp"
#include "stemml/core/error.hpp"

namespace stemml::cluster {

namespace {
double pairs(double m) { return m * (m - 1.0) / 2.0; }
}  // namespace

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b, bool exclude_noise) {
  require(a.size() == b.size(), Errc::shape, "label vectors differ in length");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  double n = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (exclude_noise && (a[i] == kNoise || b[i] == kNoise)) continue;
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
    n += 1.0;
  }
  // Trivial agreements where the pair-count denominator vanishes.
  if (n <= 1.0 || (rows.size() == cols.size() && (rows.size() == 1 || rows.size() == static_cast<std::size_t>(n))))
    return 1.0;
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : table) index += pairs(c);
  for (const auto& [key, c] : rows) sum_a += pairs(c);
  for (const auto& [key, c] : cols) sum_b += pairs(c);
  const double expected = sum_a * sum_b / pairs(n);
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 0.0;
  return (index - expected) / (maximum - expected);
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::unordered_map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      out[i] = labels[i];
      continue;
    }
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace stemml::cluster
