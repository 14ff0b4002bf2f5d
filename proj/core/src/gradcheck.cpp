// Copyright 2026 The CSN Authors.
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

#include "csn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "csn/errors.hpp"

namespace csn::ad {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

namespace {

double evaluate(const LossBuilder& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p));
  Var loss = f(tape, vars);
  if (loss.value().size() != 1) throw ContractError("loss must be scalar");
  return loss.value()[0];
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& f,
                               const std::vector<Tensor>& params, double h,
                               double tol) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw ContractError("gradient_check: step must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(p));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  report.max_rel_error.assign(params.size(), 0.0);
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      probe[p][i] = orig + h;
      const double up = evaluate(f, probe);
      probe[p][i] = orig - h;
      const double down = evaluate(f, probe);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[p][i], numeric);
      report.max_rel_error[p] = std::max(report.max_rel_error[p], err);
      report.worst = std::max(report.worst, err);
      if (!(err < tol)) {
        report.failures.push_back({p, i, analytic[p][i], numeric, err});
      }
    }
  }
  return report;
}

}  // namespace csn::ad
