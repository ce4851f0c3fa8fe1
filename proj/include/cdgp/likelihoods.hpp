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

#ifndef CDGP_LIKELIHOODS_HPP_
#define CDGP_LIKELIHOODS_HPP_

#include <Eigen/Dense>

#include "cdgp/tape.hpp"

namespace cdgp {

/// Diagonal-noise Gaussian log-likelihood of observations y (n x s) under
/// latent values f with one noise scale per output dimension
/// (log_noise_std is 1 x s). NaN entries in y are treated as unobserved and
/// contribute nothing. Differentiable w.r.t. f and log_noise_std.
diff::Var gaussian_log_lik(diff::Tape& tape, const Eigen::MatrixXd& y, diff::Var f,
                           diff::Var log_noise_std);

/// Poisson log-likelihood with log link: rate = exp(f). Counts must be
/// nonnegative integers (NaN = unobserved); throws otherwise.
diff::Var poisson_log_lik(diff::Tape& tape, const Eigen::MatrixXd& y_counts, diff::Var f);

/// Value-only conveniences (run the tape path internally).
double gaussian_log_lik_value(const Eigen::MatrixXd& y, const Eigen::MatrixXd& f,
                              const Eigen::VectorXd& noise_std);
double poisson_log_lik_value(const Eigen::MatrixXd& y_counts, const Eigen::MatrixXd& f);

}  // namespace cdgp

#endif  // CDGP_LIKELIHOODS_HPP_
