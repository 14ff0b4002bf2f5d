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

#ifndef CSN_GRADCHECK_HPP_
#define CSN_GRADCHECK_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "csn/autodiff.hpp"

namespace csn::ad {

// Builds a scalar loss on `tape` from leaves bound to the parameters.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per parameter tensor
  double worst = 0.0;
  std::vector<GradCheckEntry> failures;
  bool passed() const { return failures.empty(); }
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Compares reverse-mode gradients of `f` at `params` with central
// differences (f(p + h) - f(p - h)) / 2h, one coordinate at a time.
// h must lie in [1e-7, 1e-3].
GradCheckReport gradient_check(const LossBuilder& f,
                               const std::vector<Tensor>& params, double h,
                               double tol);

}  // namespace csn::ad

#endif  // CSN_GRADCHECK_HPP_
