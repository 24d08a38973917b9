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

#include <functional>

#include <Eigen/Core>

namespace stemml::linalg {

using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& j)>;

struct LmResult {
  Eigen::VectorXd x;
  double squared_error = 0.0;
  bool converged = false;
};

/// Nonlinear least squares min |r(x)|^2 with an analytic Jacobian.
LmResult levenberg_marquardt(int residual_count, const ResidualFn& residual, const JacobianFn& jacobian,
                             Eigen::VectorXd x0, double tol = 1e-12, int max_evaluations = 2000);

}  // namespace stemml::linalg
