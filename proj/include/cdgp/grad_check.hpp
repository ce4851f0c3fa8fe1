// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#ifndef CDGP_GRAD_CHECK_HPP_
#define CDGP_GRAD_CHECK_HPP_

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "cdgp/tape.hpp"

namespace cdgp::diff {

/// A scalar objective rebuilt from a list of tracked inputs. Must be pure:
/// any randomness has to be frozen in the closure.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_arg = -1;
  Eigen::Index worst_row = -1;
  Eigen::Index worst_col = -1;
};

/// Compares the tape gradient of f at `point` against central finite
/// differences with the given step. Per coordinate the error is
/// |analytic - central| / (|central| + 1e-12); the max is returned.
/// Throws std::runtime_error naming the coordinate if any evaluation or
/// gradient is non-finite.
GradCheckReport check_gradient(const ScalarFn& f, const std::vector<Eigen::MatrixXd>& point,
                               double step);

}  // namespace cdgp::diff

#endif  // CDGP_GRAD_CHECK_HPP_
