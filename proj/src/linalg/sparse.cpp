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

#include "stemml/linalg/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stemml/core/error.hpp"
#include "stemml/core/random.hpp"

namespace stemml::linalg {

double CsrMatrix::degree(std::size_t i) const {
  double s = 0.0;
  for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) s += val[e];
  return s;
}

void CsrMatrix::multiply(const double* x, double* y) const {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) s += val[e] * x[col[e]];
    y[i] = s;
  }
}

bool CsrMatrix::is_symmetric() const {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
      const std::size_t j = col[e];
      const auto begin = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[j]);
      const auto end = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[j + 1]);
      const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(i));
      if (it == end || *it != i || val[static_cast<std::size_t>(it - col.begin())] != val[e]) return false;
    }
  return true;
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) d(static_cast<Eigen::Index>(i), col[e]) += val[e];
  return d;
}

CsrMatrix from_triplets(std::size_t n, std::vector<Triplet> entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Triplet& t = entries[e];
    require(t.i < n && t.j < n, Errc::invalid_argument, "triplet index out of range");
    if (!m.col.empty() && e > 0 && entries[e - 1].i == t.i && entries[e - 1].j == t.j) {
      m.val.back() += t.w;
      continue;
    }
    m.col.push_back(t.j);
    m.val.push_back(t.w);
    ++m.row_ptr[t.i + 1];
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

Components connected_components(const CsrMatrix& adjacency) {
  const std::size_t n = adjacency.n;
  Components c;
  c.label.assign(n, UINT32_MAX);
  std::vector<std::uint32_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (c.label[s] != UINT32_MAX) continue;
    const auto id = static_cast<std::uint32_t>(c.count++);
    c.label[s] = id;
    stack.push_back(static_cast<std::uint32_t>(s));
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (std::size_t e = adjacency.row_ptr[v]; e < adjacency.row_ptr[v + 1]; ++e) {
        const std::uint32_t u = adjacency.col[e];
        if (c.label[u] == UINT32_MAX && adjacency.val[e] != 0.0) {
          c.label[u] = id;
          stack.push_back(u);
        }
      }
    }
  }
  return c;
}

CsrMatrix normalized_adjacency(const CsrMatrix& w) {
  CsrMatrix m = w;
  std::vector<double> inv_sqrt(w.n);
  for (std::size_t i = 0; i < w.n; ++i) {
    const double d = w.degree(i);
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  for (std::size_t i = 0; i < w.n; ++i)
    for (std::size_t e = w.row_ptr[i]; e < w.row_ptr[i + 1]; ++e) {
      // Operand order fixed by index so that (i, j) and (j, i) round identically.
      const std::size_t lo = std::min<std::size_t>(i, w.col[e]), hi = std::max<std::size_t>(i, w.col[e]);
      m.val[e] = w.val[e] * (inv_sqrt[lo] * inv_sqrt[hi]);
    }
  return m;
}

namespace {

EigenPairs dense_largest(const CsrMatrix& m, std::size_t nev) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.to_dense());
  require(es.info() == Eigen::Success, Errc::numerical, "dense eigensolver failed");
  const auto k = static_cast<Eigen::Index>(nev);
  EigenPairs out;
  out.values = es.eigenvalues().tail(k).reverse();
  out.vectors = es.eigenvectors().rightCols(k).rowwise().reverse();
  return out;
}

// Orthonormalizes block against basis columns [0, used) twice, then within itself.
// Returns the number of surviving columns appended to the basis.
Eigen::Index extend_basis(Eigen::MatrixXd& basis, Eigen::Index used, Eigen::MatrixXd block, Rng& rng) {
  const Eigen::Index n = basis.rows();
  Eigen::Index added = 0;
  for (Eigen::Index c = 0; c < block.cols() && used + added < basis.cols(); ++c) {
    Eigen::VectorXd v = block.col(c);
    const double initial = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      const auto q = basis.leftCols(used + added);
      v -= q * (q.transpose() * v);
    }
    if (v.norm() <= 1e-10 * std::max(initial, 1e-300)) {
      // Krylov breakdown: continue from a fresh random direction.
      std::normal_distribution<double> g;
      for (Eigen::Index r = 0; r < n; ++r) v(r) = g(rng);
      for (int pass = 0; pass < 2; ++pass) {
        const auto q = basis.leftCols(used + added);
        v -= q * (q.transpose() * v);
      }
      if (v.norm() < 1e-12) continue;
    }
    basis.col(used + added) = v.normalized();
    ++added;
  }
  return added;
}

}  // namespace

EigenPairs largest_eigenpairs(const CsrMatrix& m, std::size_t nev, std::uint64_t seed, double tol) {
  const std::size_t n = m.n;
  require(nev >= 1 && nev <= n, Errc::invalid_argument, fmt::format("cannot take {} eigenpairs of a size-{} matrix", nev, n));
  if (n <= 1200) return dense_largest(m, nev);

  const auto N = static_cast<Eigen::Index>(n);
  const Eigen::Index block = static_cast<Eigen::Index>(nev) + 4;
  const Eigen::Index cap = std::min<Eigen::Index>(N, 2400);
  Rng rng(seed);
  std::normal_distribution<double> g;

  Eigen::MatrixXd basis(N, cap);
  Eigen::MatrixXd image(N, cap);  // m * basis
  Eigen::MatrixXd start(N, block);
  for (Eigen::Index c = 0; c < block; ++c)
    for (Eigen::Index r = 0; r < N; ++r) start(r, c) = g(rng);
  Eigen::Index used = extend_basis(basis, 0, start, rng);
  Eigen::Index imaged = 0;
  Eigen::Index next_check = std::min<Eigen::Index>(cap, std::max<Eigen::Index>(8 * block, 64));

  EigenPairs out;
  while (true) {
    for (; imaged < used; ++imaged) m.multiply(basis.col(imaged).data(), image.col(imaged).data());
    if (used >= next_check || used >= cap) {
      const Eigen::MatrixXd t = basis.leftCols(used).transpose() * image.leftCols(used);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (t + t.transpose()));
      require(es.info() == Eigen::Success, Errc::numerical, "Rayleigh-Ritz eigensolver failed");
      const auto k = static_cast<Eigen::Index>(nev);
      const Eigen::MatrixXd coeff = es.eigenvectors().rightCols(k).rowwise().reverse();
      out.values = es.eigenvalues().tail(k).reverse();
      out.vectors = basis.leftCols(used) * coeff;
      const Eigen::MatrixXd residual = image.leftCols(used) * coeff - out.vectors * out.values.asDiagonal();
      const double scale = std::max(1.0, out.values.cwiseAbs().maxCoeff());
      const double worst = residual.colwise().norm().maxCoeff();
      if (worst <= tol * scale) {
        out.converged = true;
        break;
      }
      if (used >= cap) {
        out.converged = false;
        spdlog::warn("eigensolver stopped at basis size {} with residual {:.3g}", used, worst);
        break;
      }
      next_check = std::min<Eigen::Index>(cap, used + std::max<Eigen::Index>(used / 4, block));
    }
    const Eigen::Index from = used - std::min<Eigen::Index>(block, used);
    const Eigen::Index added = extend_basis(basis, used, image.middleCols(from, used - from), rng);
    if (added == 0) {
      next_check = used;
      if (used >= cap) continue;
      Eigen::MatrixXd fresh(N, 1);
      for (Eigen::Index r = 0; r < N; ++r) fresh(r, 0) = g(rng);
      used += extend_basis(basis, used, fresh, rng);
    } else {
      used += added;
    }
  }
  return out;
}

}  // namespace stemml::linalg
