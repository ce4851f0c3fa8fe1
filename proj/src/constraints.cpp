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

#include "cdgp/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cdgp {

using diff::Var;

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kZ975 = 1.959963984540054;

}  // namespace

Eigen::MatrixXd ThetaPosterior::chol() const {
  const int p = dim();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = l_strict(i, j);
    l(i, i) = std::exp(log_diag(i, 0));
  }
  return l;
}

Eigen::MatrixXd ThetaPosterior::cov() const {
  const Eigen::MatrixXd l = chol();
  return l * l.transpose();
}

ThetaPosterior make_theta_posterior(const std::vector<ThetaTransform>& transforms,
                                    double natural_init, double init_scale) {
  const int p = static_cast<int>(transforms.size());
  if (p < 1) throw std::invalid_argument("make_theta_posterior: empty transform list");
  if (!(init_scale > 0.0)) throw std::invalid_argument("make_theta_posterior: scale must be > 0");
  ThetaPosterior post;
  post.transforms = transforms;
  post.mu.resize(p, 1);
  for (int k = 0; k < p; ++k) {
    if (transforms[k] == ThetaTransform::kLog) {
      if (!(natural_init > 0.0)) {
        throw std::invalid_argument("make_theta_posterior: log transform needs positive init");
      }
      post.mu(k, 0) = std::log(natural_init);
    } else {
      post.mu(k, 0) = natural_init;
    }
  }
  post.l_strict = Eigen::MatrixXd::Zero(p, p);
  post.log_diag = Eigen::MatrixXd::Constant(p, 1, std::log(init_scale));
  return post;
}

ThetaVars bind_theta(diff::Tape& tape, const ThetaPosterior& posterior, bool tracked) {
  ThetaVars vars;
  if (tracked) {
    vars.mu = tape.input(posterior.mu);
    vars.l_strict = tape.input(posterior.l_strict);
    vars.log_diag = tape.input(posterior.log_diag);
  } else {
    vars.mu = tape.constant(posterior.mu);
    vars.l_strict = tape.constant(posterior.l_strict);
    vars.log_diag = tape.constant(posterior.log_diag);
  }
  return vars;
}

namespace {

// L = strict_lower(l_strict) + diag(exp(log_diag)) on the tape.
Var chol_var(diff::Tape& tape, const ThetaVars& vars, int p) {
  Eigen::MatrixXd strict_mask = Eigen::MatrixXd::Zero(p, p);
  for (int i = 1; i < p; ++i)
    for (int j = 0; j < i; ++j) strict_mask(i, j) = 1.0;
  Var strict = diff::mul(vars.l_strict, tape.constant(strict_mask));
  // diag(v): replicate the column vector across columns, then mask by I.
  Var diag = diff::mul(diff::broadcast(diff::exp(vars.log_diag), p, p),
                       tape.constant(Eigen::MatrixXd(Eigen::MatrixXd::Identity(p, p))));
  return diff::add(strict, diag);
}

}  // namespace

Var sample_theta(diff::Tape& tape, const ThetaPosterior& posterior, const ThetaVars& vars,
                 Rng& rng) {
  const int p = posterior.dim();
  Var l = chol_var(tape, vars, p);
  Var eps = tape.constant(randn(rng, p, 1));
  Var u = diff::add(vars.mu, diff::matmul(l, eps));
  Eigen::MatrixXd log_mask(p, 1), id_mask(p, 1);
  for (int k = 0; k < p; ++k) {
    const bool is_log = posterior.transforms[k] == ThetaTransform::kLog;
    log_mask(k, 0) = is_log ? 1.0 : 0.0;
    id_mask(k, 0) = is_log ? 0.0 : 1.0;
  }
  return diff::add(diff::mul(diff::exp(u), tape.constant(log_mask)),
                   diff::mul(u, tape.constant(id_mask)));
}

Var kl_theta(diff::Tape& tape, const ThetaPosterior& posterior, const ThetaVars& vars) {
  const int p = posterior.dim();
  if (!posterior.log_diag.allFinite()) {
    throw std::invalid_argument("kl_theta: non-finite Cholesky log-diagonal");
  }
  const double var_p = posterior.prior_std * posterior.prior_std;
  Var l = chol_var(tape, vars, p);
  Var trace_term = diff::scale(diff::sum(diff::square(l)), 0.5 / var_p);
  Var mean_term = diff::scale(
      diff::sum(diff::square(diff::shift(vars.mu, -posterior.prior_mean))), 0.5 / var_p);
  Var logdet_term = diff::neg(diff::sum(vars.log_diag));
  const double constant = 0.5 * (-p + p * std::log(var_p));
  return diff::shift(diff::add(diff::add(trace_term, mean_term), logdet_term), constant);
}

double kl_theta_value(const ThetaPosterior& posterior) {
  diff::Tape tape;
  ThetaVars vars = bind_theta(tape, posterior, false);
  return kl_theta(tape, posterior, vars).scalar();
}

ThetaSummary summarize_theta(const ThetaPosterior& posterior) {
  const int p = posterior.dim();
  const Eigen::MatrixXd cov = posterior.cov();
  ThetaSummary s;
  s.mean.resize(p);
  s.stddev.resize(p);
  s.q025.resize(p);
  s.q975.resize(p);
  for (int k = 0; k < p; ++k) {
    const double mu = posterior.mu(k, 0);
    const double sd = std::sqrt(cov(k, k));
    if (posterior.transforms[k] == ThetaTransform::kLog) {
      s.mean(k) = std::exp(mu + 0.5 * sd * sd);
      s.stddev(k) = s.mean(k) * std::sqrt(std::exp(sd * sd) - 1.0);
      s.q025(k) = std::exp(mu - kZ975 * sd);
      s.q975(k) = std::exp(mu + kZ975 * sd);
    } else {
      s.mean(k) = mu;
      s.stddev(k) = sd;
      s.q025(k) = mu - kZ975 * sd;
      s.q975(k) = mu + kZ975 * sd;
    }
  }
  return s;
}

Eigen::VectorXd virtual_grid_union(const Eigen::VectorXd& obs_times, int n_uniform) {
  std::vector<double> all(obs_times.data(), obs_times.data() + obs_times.size());
  if (n_uniform > 0) {
    const double lo = obs_times.minCoeff();
    const double hi = obs_times.maxCoeff();
    const Eigen::VectorXd uni = Eigen::VectorXd::LinSpaced(n_uniform, lo, hi);
    all.insert(all.end(), uni.data(), uni.data() + uni.size());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return Eigen::Map<Eigen::VectorXd>(all.data(), static_cast<Eigen::Index>(all.size()));
}

std::vector<int> match_indices(const Eigen::VectorXd& grid, const Eigen::VectorXd& obs_times) {
  std::vector<int> idx(obs_times.size());
  for (Eigen::Index i = 0; i < obs_times.size(); ++i) {
    const double* begin = grid.data();
    const double* end = begin + grid.size();
    const double* at = std::lower_bound(begin, end, obs_times(i));
    if (at == end || *at != obs_times(i)) {
      throw std::logic_error("match_indices: observation time missing from grid");
    }
    idx[i] = static_cast<int>(at - begin);
  }
  return idx;
}

namespace {

std::vector<Var> theta_components(diff::Tape& tape, Var theta) {
  const int p = static_cast<int>(theta.rows());
  std::vector<Var> parts;
  parts.reserve(p);
  for (int k = 0; k < p; ++k) {
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, p);
    sel(0, k) = 1.0;
    parts.push_back(diff::matmul(tape.constant(std::move(sel)), theta));
  }
  return parts;
}

}  // namespace

Var equality_log_prob(diff::Tape& tape, const ConstraintSpec& spec, const PathVars& path,
                      const Eigen::VectorXd& grid_times, Var theta_natural, Var log_scale) {
  if (spec.kind != ConstraintKind::kEquality) {
    throw std::invalid_argument("equality_log_prob: spec is not an equality constraint");
  }
  if (spec.noise == ConstraintNoise::kLogistic) {
    throw std::invalid_argument("equality_log_prob: logistic noise is for inequalities");
  }
  const int s = static_cast<int>(path.f.cols());
  for (int d : spec.dims) {
    if (d < 0 || d >= s) {
      throw std::invalid_argument("equality_log_prob: constrained dim " + std::to_string(d) +
                                  " out of range");
    }
  }
  std::vector<Var> theta = theta_components(tape, theta_natural);
  std::vector<Var> drift = spec.system.drift_tape(tape, grid_times, path.f, theta);

  const int n_dims = static_cast<int>(spec.dims.size());
  const bool per_dim = log_scale.cols() == n_dims && n_dims > 1;
  if (!per_dim && (log_scale.rows() != 1 || log_scale.cols() != 1)) {
    throw std::invalid_argument("equality_log_prob: log_scale must be 1x1 or 1 x #dims");
  }
  const double n_grid = static_cast<double>(grid_times.size());
  const double n_terms = static_cast<double>(n_dims) * n_grid;
  auto scale_of = [&](int k) {
    return per_dim ? diff::col(log_scale, k) : log_scale;
  };
  if (spec.noise == ConstraintNoise::kGaussian) {
    Var total = tape.constant(0.0);
    for (int k = 0; k < n_dims; ++k) {
      const int d = spec.dims[k];
      Var resid = diff::sub(diff::col(path.df_dt, d), drift[d]);
      Var ls = scale_of(k);
      Var inv_two_var = diff::scale(diff::exp(diff::scale(ls, -2.0)), 0.5);
      Var fit = diff::mul(diff::sum(diff::square(resid)), inv_two_var);
      total = diff::add(total, diff::add(fit, diff::scale(ls, n_grid)));
    }
    return diff::shift(diff::neg(total), -0.5 * kLogTwoPi * n_terms);
  }

  // Fully normalized Student-t with fixed nu and optimized scale lambda_D:
  // lgamma((nu+1)/2) - lgamma(nu/2) - 0.5 log(nu pi) - log lambda
  //   - (nu+1)/2 log(1 + r^2 / (nu lambda^2)).
  const double nu = spec.student_nu;
  if (!(nu > 0.0)) throw std::invalid_argument("equality_log_prob: Student-t nu must be > 0");
  Var c_nu = diff::shift(diff::sub(diff::lgamma(tape.constant(0.5 * (nu + 1.0))),
                                   diff::lgamma(tape.constant(0.5 * nu))),
                         -0.5 * std::log(nu * M_PI));
  Var total = tape.constant(0.0);
  for (int k = 0; k < n_dims; ++k) {
    const int d = spec.dims[k];
    Var ls = scale_of(k);
    Var inv_nu_lam2 = diff::scale(diff::exp(diff::scale(ls, -2.0)), 1.0 / nu);
    Var resid = diff::sub(diff::col(path.df_dt, d), drift[d]);
    Var scaled = diff::mul(diff::square(resid),
                           diff::broadcast(inv_nu_lam2, resid.rows(), 1));
    Var log_terms = diff::sum(diff::log(diff::shift(scaled, 1.0)));
    total = diff::add(total, diff::add(diff::scale(log_terms, 0.5 * (nu + 1.0)),
                                       diff::scale(ls, n_grid)));
  }
  return diff::sub(diff::scale(c_nu, n_terms), total);
}

Var inequality_log_prob(diff::Tape& tape, const ConstraintSpec& spec, const PathVars& path,
                        const Eigen::VectorXd& grid_times) {
  if (spec.kind != ConstraintKind::kInequality) {
    throw std::invalid_argument("inequality_log_prob: spec is not an inequality constraint");
  }
  Eigen::MatrixXd bound = Eigen::MatrixXd::Zero(grid_times.size(), 1);
  if (spec.bound) {
    for (Eigen::Index i = 0; i < grid_times.size(); ++i) bound(i, 0) = spec.bound(grid_times(i));
  }
  Var bound_const = tape.constant(std::move(bound));
  Var total = tape.constant(0.0);
  for (int d : spec.dims) {
    Var slack = diff::sub(diff::col(path.df_dt, d), bound_const);
    Var penalties = diff::softplus(diff::neg(diff::scale(slack, spec.psi_d)));
    total = diff::sub(total, diff::sum(penalties));
  }
  return total;
}

}  // namespace cdgp
