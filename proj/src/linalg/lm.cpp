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

#include "stemml/linalg/lm.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>

namespace stemml::linalg {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
  Functor(int inputs, int values, const ResidualFn& r, const JacobianFn& j)
      : Eigen::DenseFunctor<double>(inputs, values), residual(r), jacobian(j) {}
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    residual(x, fvec);
    return 0;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const {
    jacobian(x, fjac);
    return 0;
  }
  const ResidualFn& residual;
  const JacobianFn& jacobian;
};

}  // namespace

LmResult levenberg_marquardt(int residual_count, const ResidualFn& residual, const JacobianFn& jacobian,
                             Eigen::VectorXd x0, double tol, int max_evaluations) {
  Functor f(static_cast<int>(x0.size()), residual_count, residual, jacobian);
  Eigen::LevenbergMarquardt<Functor> lm(f);
  lm.setFtol(tol);
  lm.setXtol(tol);
  lm.setMaxfev(max_evaluations);
  const Eigen::LevenbergMarquardtSpace::Status status = lm.minimize(x0);
  LmResult out;
  out.x = x0;
  Eigen::VectorXd r(residual_count);
  residual(x0, r);
  out.squared_error = r.squaredNorm();
  out.converged = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                  status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
  return out;
}

}  // namespace stemml::linalg
