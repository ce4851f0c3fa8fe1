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

#ifndef CDGP_CONSTRAINTS_HPP_
#define CDGP_CONSTRAINTS_HPP_

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "cdgp/dgp.hpp"
#include "cdgp/ode.hpp"
#include "cdgp/rng.hpp"
#include "cdgp/tape.hpp"

namespace cdgp {

enum class ConstraintKind { kNone, kEquality, kInequality };
enum class ConstraintNoise { kGaussian, kStudentT, kLogistic };
enum class ThetaTransform { kIdentity, kLog };

/// Full-covariance Gaussian variational posterior over constraint (ODE)
/// parameters in unconstrained space, with a per-parameter transform to
/// natural space. The Cholesky factor is parameterized as
/// strict_lower(l_strict) + diag(exp(log_diag)), so its diagonal is
/// positive by construction. The prior is N(prior_mean, prior_std^2 I) in
/// unconstrained space.
struct ThetaPosterior {
  Eigen::MatrixXd mu;        // p x 1
  Eigen::MatrixXd l_strict;  // p x p (only the strict lower triangle used)
  Eigen::MatrixXd log_diag;  // p x 1
  std::vector<ThetaTransform> transforms;
  double prior_mean = 0.0;
  double prior_std = 1.0;

  int dim() const { return static_cast<int>(mu.rows()); }
  Eigen::MatrixXd chol() const;  // L
  Eigen::MatrixXd cov() const;   // L L^T
};

/// Posterior initialized at the given natural-space value (componentwise)
/// with Cholesky factor init_scale * I.
ThetaPosterior make_theta_posterior(const std::vector<ThetaTransform>& transforms,
                                    double natural_init, double init_scale);

struct ThetaVars {
  diff::Var mu, l_strict, log_diag;
};
ThetaVars bind_theta(diff::Tape& tape, const ThetaPosterior& posterior, bool tracked);

/// Reparameterized draw mapped to natural space: u = mu + L eps,
/// theta_k = u_k or exp(u_k). Returns a p x 1 var with pathwise gradients.
diff::Var sample_theta(diff::Tape& tape, const ThetaPosterior& posterior, const ThetaVars& vars,
                       Rng& rng);

/// KL(q(theta) || p(theta)) in unconstrained space, closed form.
diff::Var kl_theta(diff::Tape& tape, const ThetaPosterior& posterior, const ThetaVars& vars);
double kl_theta_value(const ThetaPosterior& posterior);

/// Analytic marginal summaries in natural space (mean, std, central 95%).
struct ThetaSummary {
  Eigen::VectorXd mean, stddev, q025, q975;
};
ThetaSummary summarize_theta(const ThetaPosterior& posterior);

/// Soft constraint on the DGP dynamics over a virtual grid. Equality ties
/// first derivatives to the drift of an ODE system (Gaussian or Student-t
/// residual model, scale exp(log_scale) optimized); inequality pushes
/// derivatives above a bound (zero by default) through a logistic factor of
/// fixed strength psi_d.
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::kNone;
  std::vector<int> dims;  // constrained output dimensions, derivative order 1
  OdeSystem system;       // equality only
  ConstraintNoise noise = ConstraintNoise::kGaussian;
  double student_nu = 3.0;
  double psi_d = 5.0;
  Eigen::MatrixXd log_scale;  // 1 x 1: log sigma_D (Gaussian) or log lambda_D (Student-t)
  Eigen::VectorXd grid;
  std::function<double(double)> bound;  // inequality lower bound; null = 0

  bool active() const { return kind != ConstraintKind::kNone; }
};

/// Sorted union of the observation times and n_uniform equally spaced
/// points spanning them (exact duplicates collapsed).
Eigen::VectorXd virtual_grid_union(const Eigen::VectorXd& obs_times, int n_uniform);

/// Positions of each observation time inside the grid (exact matches).
std::vector<int> match_indices(const Eigen::VectorXd& grid, const Eigen::VectorXd& obs_times);

/// Equality constraint log-likelihood: sum over constrained dimensions and
/// grid points of log N(df_i/dt | H_i(t, f, theta), sigma_D^2), or the
/// fully normalized Student-t equivalent. theta_natural is a p x 1 var in
/// natural space.
diff::Var equality_log_prob(diff::Tape& tape, const ConstraintSpec& spec, const PathVars& path,
                            const Eigen::VectorXd& grid_times, diff::Var theta_natural,
                            diff::Var log_scale);

/// Inequality constraint log-likelihood: sum of -softplus(-psi_D * slack)
/// with slack = df/dt - bound(t).
diff::Var inequality_log_prob(diff::Tape& tape, const ConstraintSpec& spec,
                              const PathVars& path, const Eigen::VectorXd& grid_times);

}  // namespace cdgp

#endif  // CDGP_CONSTRAINTS_HPP_
