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

#include "cdgp/grad_check.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cdgp::diff {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Eigen::MatrixXd>& point) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Eigen::MatrixXd& p : point) vars.push_back(tape.input(p));
  return f(tape, vars).scalar();
}

[[noreturn]] void fail_non_finite(const char* what, int arg, Eigen::Index r, Eigen::Index c) {
  throw std::runtime_error(std::string("check_gradient: non-finite ") + what + " at arg " +
                           std::to_string(arg) + " coordinate (" + std::to_string(r) + "," +
                           std::to_string(c) + ")");
}

}  // namespace

GradCheckReport check_gradient(const ScalarFn& f, const std::vector<Eigen::MatrixXd>& point,
                               double step) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be > 0");

  // Analytic pass.
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Eigen::MatrixXd& p : point) vars.push_back(tape.input(p));
  Var y = f(tape, vars);
  if (!std::isfinite(y.scalar())) fail_non_finite("value", -1, 0, 0);
  tape.backward(y);
  std::vector<Eigen::MatrixXd> analytic;
  analytic.reserve(vars.size());
  for (Var v : vars) analytic.push_back(v.grad());

  GradCheckReport report;
  std::vector<Eigen::MatrixXd> probe = point;
  for (int a = 0; a < static_cast<int>(point.size()); ++a) {
    for (Eigen::Index r = 0; r < point[a].rows(); ++r) {
      for (Eigen::Index c = 0; c < point[a].cols(); ++c) {
        const double saved = probe[a](r, c);
        probe[a](r, c) = saved + step;
        const double plus = evaluate(f, probe);
        probe[a](r, c) = saved - step;
        const double minus = evaluate(f, probe);
        probe[a](r, c) = saved;
        if (!std::isfinite(plus) || !std::isfinite(minus)) fail_non_finite("value", a, r, c);
        const double central = (plus - minus) / (2.0 * step);
        const double exact = analytic[a](r, c);
        if (!std::isfinite(exact)) fail_non_finite("gradient", a, r, c);
        const double rel = std::abs(exact - central) / (std::abs(central) + 1e-12);
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_arg = a;
          report.worst_row = r;
          report.worst_col = c;
        }
      }
    }
  }
  return report;
}

}  // namespace cdgp::diff
