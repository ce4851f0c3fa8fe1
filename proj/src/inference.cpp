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

#include "cdgp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdgp/likelihoods.hpp"

namespace cdgp {

using diff::Var;

void adam_step(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad, AdamState& state,
               const AdamConfig& config) {
  if (state.t == 0) {
    state.m = Eigen::MatrixXd::Zero(value.rows(), value.cols());
    state.v = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  const Eigen::MatrixXd m_hat = state.m / bc1;
  const Eigen::MatrixXd v_hat = state.v / bc2;
  value.array() +=
      config.step * m_hat.array() / (v_hat.array().sqrt() + config.eps);
}

namespace {

// Masks y down to the dimensions with the given likelihood kind (others NaN).
Eigen::MatrixXd keep_kind(const TimeSeriesDataset& data, LikelihoodKind kind) {
  Eigen::MatrixXd y = data.y;
  for (int j = 0; j < data.dim(); ++j) {
    if (data.likelihood[j] != kind) {
      y.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return y;
}

bool has_kind(const TimeSeriesDataset& data, LikelihoodKind kind) {
  for (int j = 0; j < data.dim(); ++j) {
    if (data.likelihood[j] == kind && data.column_observed(j)) return true;
  }
  return false;
}

}  // namespace

ElboGraph build_elbo(diff::Tape& tape, const DgpModel& model, const TimeSeriesDataset& data,
                     const ConstraintSpec& spec, const ThetaPosterior* theta, int n_mc,
                     Rng& weight_rng, Rng& theta_rng, bool tracked) {
  if (n_mc < 1) throw std::invalid_argument("build_elbo: n_mc must be >= 1");
  if (data.n() < 1) throw std::invalid_argument("build_elbo: empty dataset");
  const bool equality = spec.kind == ConstraintKind::kEquality;
  if (equality && theta == nullptr) {
    throw std::invalid_argument("build_elbo: equality constraint needs a theta posterior");
  }

  ElboGraph g;
  g.dgp = bind_dgp(tape, model, tracked);
  if (equality) {
    g.theta = bind_theta(tape, *theta, tracked);
    g.log_scale = tracked ? tape.input(spec.log_scale) : tape.constant(spec.log_scale);
    g.has_theta = true;
  }

  // One forward pass per draw over the union of observation and constraint
  // times; each term selects its rows out of the shared path. Without an
  // active constraint the evaluation grid is just the observation times.
  const Eigen::VectorXd& grid = spec.active() && spec.grid.size() > 0 ? spec.grid : data.times;
  Eigen::VectorXd eval_times(data.times.size() + grid.size());
  eval_times << data.times, grid;
  std::sort(eval_times.data(), eval_times.data() + eval_times.size());
  eval_times.conservativeResize(
      std::unique(eval_times.data(), eval_times.data() + eval_times.size()) -
      eval_times.data());

  auto make_selector = [&](const Eigen::VectorXd& wanted, bool& identity) {
    const std::vector<int> at = match_indices(eval_times, wanted);
    identity = wanted.size() == eval_times.size();
    for (std::size_t i = 0; identity && i < at.size(); ++i) identity = at[i] == static_cast<int>(i);
    Eigen::MatrixXd sel;
    if (!identity) {
      sel = Eigen::MatrixXd::Zero(wanted.size(), eval_times.size());
      for (std::size_t i = 0; i < at.size(); ++i) sel(static_cast<int>(i), at[i]) = 1.0;
    }
    return sel;
  };
  bool obs_identity = false, grid_identity = false;
  const Eigen::MatrixXd obs_selector = make_selector(data.times, obs_identity);
  const Eigen::MatrixXd grid_selector =
      spec.active() ? make_selector(grid, grid_identity) : Eigen::MatrixXd();

  const bool gaussian_data = has_kind(data, LikelihoodKind::kGaussian);
  const bool poisson_data = has_kind(data, LikelihoodKind::kPoisson);
  const Eigen::MatrixXd y_gauss = keep_kind(data, LikelihoodKind::kGaussian);
  const Eigen::MatrixXd y_pois = keep_kind(data, LikelihoodKind::kPoisson);

  Var data_sum = tape.constant(0.0);
  Var constraint_sum = tape.constant(0.0);
  SharedFeatures shared;  // first-layer features reused across the draws
  for (int k = 0; k < n_mc; ++k) {
    std::vector<Var> weights = sample_weights(tape, model, g.dgp, weight_rng);
    PathVars path = forward_with_derivative(tape, model, g.dgp, weights, eval_times, &shared);
    Var f_obs = obs_identity ? path.f : diff::matmul(tape.constant(obs_selector), path.f);

    if (gaussian_data) {
      data_sum = diff::add(data_sum, gaussian_log_lik(tape, y_gauss, f_obs, g.dgp.log_noise_std));
    }
    if (poisson_data) {
      data_sum = diff::add(data_sum, poisson_log_lik(tape, y_pois, f_obs));
    }

    if (spec.active()) {
      PathVars on_grid = path;
      if (!grid_identity) {
        Var sel = tape.constant(grid_selector);
        on_grid = PathVars{diff::matmul(sel, path.f), diff::matmul(sel, path.df_dt)};
      }
      if (equality) {
        Var theta_draw = sample_theta(tape, *theta, g.theta, theta_rng);
        constraint_sum = diff::add(constraint_sum, equality_log_prob(tape, spec, on_grid, grid,
                                                                     theta_draw, g.log_scale));
      } else {
        constraint_sum =
            diff::add(constraint_sum, inequality_log_prob(tape, spec, on_grid, grid));
      }
    }
  }
  const double inv_mc = 1.0 / static_cast<double>(n_mc);
  g.data_ll = diff::scale(data_sum, inv_mc);
  g.constraint_ll = diff::scale(constraint_sum, inv_mc);
  g.kl_w = kl_weights(tape, g.dgp);
  g.kl_theta = g.has_theta ? kl_theta(tape, *theta, g.theta) : tape.constant(0.0);
  g.total = diff::sub(diff::sub(diff::add(g.data_ll, g.constraint_ll), g.kl_w), g.kl_theta);
  return g;
}

ElboReport elbo_estimate(const DgpModel& model, const TimeSeriesDataset& data,
                         const ConstraintSpec& spec, const ThetaPosterior* theta, int n_mc,
                         std::uint64_t weight_seed, std::uint64_t theta_seed) {
  diff::Tape tape;
  Rng w_rng(weight_seed), t_rng(theta_seed);
  ElboGraph g = build_elbo(tape, model, data, spec, theta, n_mc, w_rng, t_rng, false);
  ElboReport report;
  report.total = g.total.scalar();
  report.data_ll = g.data_ll.scalar();
  report.constraint_ll = g.constraint_ll.scalar();
  report.kl_w = g.kl_w.scalar();
  report.kl_theta = g.kl_theta.scalar();
  return report;
}

namespace {

enum class Phase { kModel = 0, kConstraint = 1 };

struct ParamSlot {
  Eigen::MatrixXd* value = nullptr;
  Phase phase = Phase::kModel;
  AdamState adam;
};

// y statistics over observed entries, with count dimensions mapped through
// log1p so the amplitude matches the latent (log-rate) scale.
std::pair<double, double> observed_range(const TimeSeriesDataset& data) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      double v = data.y(i, j);
      if (std::isnan(v)) continue;
      if (data.likelihood[j] == LikelihoodKind::kPoisson) v = std::log1p(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) throw std::invalid_argument("train: degenerate observation range");
  return {lo, hi};
}

}  // namespace

FitResult train(const TimeSeriesDataset& data, const Architecture& arch, ConstraintSpec spec,
                const TrainConfig& config) {
  if (data.n() < 1) throw std::invalid_argument("train: empty dataset");

  const double t_range = data.times.maxCoeff() - data.times.minCoeff();
  if (!(t_range > 0.0)) throw std::invalid_argument("train: degenerate time range");
  const auto [y_lo, y_hi] = observed_range(data);
  const double y_range = y_hi - y_lo;
  const double lambda0 = std::log(t_range);
  const double alpha0 = std::log(y_range);
  // sigma0^2 = alpha0 / 1e5 read literally; guarded when the log-range is
  // not positive.
  const double sigma0_sq = alpha0 > 0.0 ? alpha0 * 1e-5 : y_range * y_range * 1e-5;
  const double sigma0 = config.noise_std_init > 0.0 ? config.noise_std_init
                                                    : std::sqrt(sigma0_sq);

  FitResult fit;
  fit.model = build_dgp(arch, 1, data.dim(), lambda0, alpha0, sigma0, config.seed_spectral,
                        config.weight_log_std_init);
  fit.constraint = std::move(spec);
  ConstraintSpec& cons = fit.constraint;
  if (cons.active()) {
    if (cons.grid.size() == 0) cons.grid = virtual_grid_union(data.times, 50);
    if (cons.dims.empty()) {
      for (int j = 0; j < data.dim(); ++j) cons.dims.push_back(j);
    }
  }
  const bool equality = cons.kind == ConstraintKind::kEquality;
  if (equality) {
    if (cons.log_scale.size() == 0) {
      cons.log_scale = Eigen::MatrixXd::Zero(1, std::max<std::size_t>(1, cons.dims.size()));
    }
    fit.theta = make_theta_posterior(
        std::vector<ThetaTransform>(cons.system.param_dim, ThetaTransform::kLog),
        config.theta_init, config.theta_init_scale);
    fit.has_theta = true;
  }

  // Parameter registry; binding order in build_elbo must match:
  // layers (mean, log_std, log_ell, log_amp), noise, then theta + scale.
  std::vector<ParamSlot> slots;
  for (Layer& layer : fit.model.layers) {
    slots.push_back({&layer.weight_mean, Phase::kModel, {}});
    slots.push_back({&layer.weight_log_std, Phase::kModel, {}});
    slots.push_back({&layer.kernel.log_lengthscale, Phase::kModel, {}});
    slots.push_back({&layer.kernel.log_amplitude, Phase::kModel, {}});
  }
  slots.push_back({&fit.model.log_noise_std, Phase::kModel, {}});
  if (equality) {
    slots.push_back({&fit.theta.mu, Phase::kConstraint, {}});
    slots.push_back({&fit.theta.l_strict, Phase::kConstraint, {}});
    slots.push_back({&fit.theta.log_diag, Phase::kConstraint, {}});
    slots.push_back({&cons.log_scale, Phase::kConstraint, {}});
  }
  const bool has_phase_b = equality;

  Rng weight_rng(config.seed_weights);
  Rng theta_rng(config.seed_theta);
  diff::Tape tape;
  long iter = 0;

  auto run_phase = [&](Phase phase, const AdamConfig& adam) {
    for (int it = 0; it < config.iters_per_phase; ++it) {
      tape.clear();
      ElboGraph g = build_elbo(tape, fit.model, data, cons, equality ? &fit.theta : nullptr,
                               config.mc_train, weight_rng, theta_rng, true);
      ElboReport report;
      report.total = g.total.scalar();
      report.data_ll = g.data_ll.scalar();
      report.constraint_ll = g.constraint_ll.scalar();
      report.kl_w = g.kl_w.scalar();
      report.kl_theta = g.kl_theta.scalar();
      report.iter = iter;
      report.phase = static_cast<int>(phase);
      fit.trace.push_back(report);
      if (!std::isfinite(report.total)) {
        throw TrainAbort("train: non-finite ELBO at iteration " + std::to_string(iter),
                         fit.trace);
      }
      tape.backward(g.total);

      // Gradients come back through the same binding order used above.
      std::vector<const Eigen::MatrixXd*> grads;
      for (const LayerVars& lv : g.dgp.layers) {
        grads.push_back(&lv.weight_mean.grad());
        grads.push_back(&lv.weight_log_std.grad());
        grads.push_back(&lv.log_ell.grad());
        grads.push_back(&lv.log_amp.grad());
      }
      grads.push_back(g.dgp.has_noise ? &g.dgp.log_noise_std.grad() : nullptr);
      if (equality) {
        grads.push_back(&g.theta.mu.grad());
        grads.push_back(&g.theta.l_strict.grad());
        grads.push_back(&g.theta.log_diag.grad());
        grads.push_back(&g.log_scale.grad());
      }
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].phase != phase || grads[i] == nullptr) continue;
        adam_step(*slots[i].value, *grads[i], slots[i].adam, adam);
      }
      if (equality && config.min_constraint_scale > 0.0) {
        const double floor = std::log(config.min_constraint_scale);
        for (Eigen::Index j = 0; j < cons.log_scale.cols(); ++j) {
          if (cons.log_scale(0, j) < floor) cons.log_scale(0, j) = floor;
        }
      }
      if (config.min_noise_std > 0.0 && fit.model.log_noise_std.size() > 0) {
        const double floor = std::log(config.min_noise_std);
        for (Eigen::Index j = 0; j < fit.model.log_noise_std.cols(); ++j) {
          if (fit.model.log_noise_std(0, j) < floor) fit.model.log_noise_std(0, j) = floor;
        }
      }
      ++iter;
    }
  };

  for (int round = 0; round < config.rounds; ++round) {
    run_phase(Phase::kModel, config.adam_model);
    if (has_phase_b) run_phase(Phase::kConstraint, config.adam_constraint);
  }
  return fit;
}

PredictResult predict(const DgpModel& model, const ThetaPosterior* theta,
                      const Eigen::VectorXd& t_star, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
  if (!t_star.allFinite()) throw std::invalid_argument("predict: non-finite times");
  PredictResult out;
  out.times = t_star;
  Rng rng(seed);
  const int n = static_cast<int>(t_star.size());
  const int s = model.output_dim();
  out.f_samples.reserve(n_samples);
  out.df_samples.reserve(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    PathSample path = sample_path(model, t_star, rng);
    out.f_samples.push_back(std::move(path.f));
    out.df_samples.push_back(std::move(path.df_dt));
  }
  if (theta != nullptr) {
    const int p = theta->dim();
    const Eigen::MatrixXd l = theta->chol();
    out.theta_samples.resize(n_samples, p);
    for (int k = 0; k < n_samples; ++k) {
      const Eigen::VectorXd u = theta->mu + l * Eigen::MatrixXd(randn(rng, p, 1));
      for (int j = 0; j < p; ++j) {
        out.theta_samples(k, j) =
            theta->transforms[j] == ThetaTransform::kLog ? std::exp(u(j)) : u(j);
      }
    }
  }

  out.f_mean = Eigen::MatrixXd::Zero(n, s);
  out.df_mean = Eigen::MatrixXd::Zero(n, s);
  for (int k = 0; k < n_samples; ++k) {
    out.f_mean += out.f_samples[k];
    out.df_mean += out.df_samples[k];
  }
  out.f_mean /= n_samples;
  out.df_mean /= n_samples;

  out.f_lo.resize(n, s);
  out.f_hi.resize(n, s);
  std::vector<double> buf(n_samples);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < s; ++j) {
      for (int k = 0; k < n_samples; ++k) buf[static_cast<size_t>(k)] = out.f_samples[k](i, j);
      std::sort(buf.begin(), buf.end());
      const auto pick = [&](double q) {
        const double pos = q * (n_samples - 1);
        return buf[static_cast<size_t>(std::lround(pos))];
      };
      out.f_lo(i, j) = pick(0.025);
      out.f_hi(i, j) = pick(0.975);
    }
  }
  return out;
}

}  // namespace cdgp
