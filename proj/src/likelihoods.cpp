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

#include "cdgp/likelihoods.hpp"

#include <cmath>
#include <stdexcept>

namespace cdgp {

using diff::Var;

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

struct MaskedY {
  Eigen::MatrixXd y_filled;      // NaN -> 0
  Eigen::MatrixXd mask;          // 1 observed, 0 missing
  Eigen::RowVectorXd col_count;  // observed entries per column
  double total = 0.0;
};

MaskedY split_missing(const Eigen::MatrixXd& y) {
  MaskedY m;
  m.y_filled = y;
  m.mask.resize(y.rows(), y.cols());
  m.col_count = Eigen::RowVectorXd::Zero(y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const bool observed = !std::isnan(y(i, j));
      m.mask(i, j) = observed ? 1.0 : 0.0;
      if (observed) {
        m.col_count(j) += 1.0;
      } else {
        m.y_filled(i, j) = 0.0;
      }
    }
  }
  m.total = m.col_count.sum();
  return m;
}

}  // namespace

Var gaussian_log_lik(diff::Tape& tape, const Eigen::MatrixXd& y, Var f, Var log_noise_std) {
  if (f.rows() != y.rows() || f.cols() != y.cols()) {
    throw std::invalid_argument("gaussian_log_lik: y and f shapes differ");
  }
  if (log_noise_std.rows() != 1 || log_noise_std.cols() != y.cols()) {
    throw std::invalid_argument("gaussian_log_lik: log_noise_std must be 1 x dim");
  }
  const MaskedY m = split_missing(y);
  const Eigen::Index n = y.rows(), s = y.cols();

  Var resid = diff::mul(diff::sub(tape.constant(m.y_filled), f), tape.constant(m.mask));
  Var inv_two_var = diff::scale(diff::exp(diff::scale(log_noise_std, -2.0)), 0.5);  // 1/(2s^2)
  Var quad = diff::sum(diff::mul(diff::square(resid), diff::broadcast(inv_two_var, n, s)));
  Var norm = diff::sum(diff::mul(log_noise_std, tape.constant(Eigen::MatrixXd(m.col_count))));
  return diff::shift(diff::neg(diff::add(quad, norm)), -0.5 * kLogTwoPi * m.total);
}

Var poisson_log_lik(diff::Tape& tape, const Eigen::MatrixXd& y_counts, Var f) {
  if (f.rows() != y_counts.rows() || f.cols() != y_counts.cols()) {
    throw std::invalid_argument("poisson_log_lik: y and f shapes differ");
  }
  for (Eigen::Index i = 0; i < y_counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < y_counts.cols(); ++j) {
      const double v = y_counts(i, j);
      if (std::isnan(v)) continue;
      if (v < 0.0 || std::floor(v) != v) {
        throw std::invalid_argument("poisson_log_lik: counts must be nonnegative integers, got " +
                                    std::to_string(v));
      }
    }
  }
  const MaskedY m = split_missing(y_counts);
  Var mask = tape.constant(m.mask);
  Var y = tape.constant(m.y_filled);
  Var linear = diff::sum(diff::mul(y, diff::mul(f, mask)));
  Var rate = diff::sum(diff::mul(diff::exp(f), mask));
  // lgamma(y + 1) is a constant subtree; keeps the normalizer on the record.
  Var norm = diff::sum(diff::mul(diff::lgamma(diff::shift(y, 1.0)), mask));
  return diff::sub(diff::sub(linear, rate), norm);
}

double gaussian_log_lik_value(const Eigen::MatrixXd& y, const Eigen::MatrixXd& f,
                              const Eigen::VectorXd& noise_std) {
  diff::Tape tape;
  Eigen::MatrixXd log_std = noise_std.array().log().matrix().transpose();
  return gaussian_log_lik(tape, y, tape.constant(f), tape.constant(log_std)).scalar();
}

double poisson_log_lik_value(const Eigen::MatrixXd& y_counts, const Eigen::MatrixXd& f) {
  diff::Tape tape;
  return poisson_log_lik(tape, y_counts, tape.constant(f)).scalar();
}

}  // namespace cdgp
