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

#ifndef CDGP_INFERENCE_HPP_
#define CDGP_INFERENCE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdgp/constraints.hpp"
#include "cdgp/dgp.hpp"
#include "cdgp/ode.hpp"

namespace cdgp {

struct AdamConfig {
  double step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::MatrixXd m, v;
  long t = 0;
};

/// One ascent step of Adam with bias correction (we maximize the ELBO).
void adam_step(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  int iters_per_phase = 500;
  int rounds = 10;
  AdamConfig adam_model{1e-2, 0.9, 0.999, 1e-8};       // phase A
  AdamConfig adam_constraint{1e-3, 0.9, 0.999, 1e-8};  // phase B
  int mc_train = 10;
  int mc_predict = 100;
  std::uint64_t seed_spectral = 1001;
  std::uint64_t seed_weights = 2002;
  std::uint64_t seed_theta = 3003;
  double theta_init = 0.1;        // natural space
  double theta_init_scale = 0.1;  // initial Cholesky diagonal
  double weight_log_std_init = -2.0;
  // Backstop against constraint-scale collapse (the likelihood is unbounded
  // as the scale goes to zero); 0 disables.
  double min_constraint_scale = 1e-3;
  // Floor on the Gaussian observation-noise std during training; 0 disables.
  double min_noise_std = 0.0;
  // Overrides the paper-style sigma0 initialization when > 0.
  double noise_std_init = 0.0;
};

/// One ELBO evaluation. The identity
/// total = data_ll + constraint_ll - kl_w - kl_theta holds exactly for the
/// same Monte Carlo draws.
struct ElboReport {
  double total = 0.0;
  double data_ll = 0.0;
  double constraint_ll = 0.0;
  double kl_w = 0.0;
  double kl_theta = 0.0;
  long iter = 0;
  int phase = 0;
};

/// Tape bindings and component nodes of one ELBO graph; the expectation is
/// an average over n_mc reparameterized joint draws of (W, theta), with one
/// forward pass per draw scoring data rows at the observation times and
/// constraints over the whole virtual grid.
struct ElboGraph {
  DgpVars dgp;
  ThetaVars theta;
  diff::Var log_scale;  // equality constraint scale
  diff::Var total, data_ll, constraint_ll, kl_w, kl_theta;
  bool has_theta = false;
};

ElboGraph build_elbo(diff::Tape& tape, const DgpModel& model, const TimeSeriesDataset& data,
                     const ConstraintSpec& spec, const ThetaPosterior* theta, int n_mc,
                     Rng& weight_rng, Rng& theta_rng, bool tracked);

/// Deterministic given seeds; no gradients returned.
ElboReport elbo_estimate(const DgpModel& model, const TimeSeriesDataset& data,
                         const ConstraintSpec& spec, const ThetaPosterior* theta, int n_mc,
                         std::uint64_t weight_seed, std::uint64_t theta_seed);

struct FitResult {
  DgpModel model;
  ThetaPosterior theta;
  bool has_theta = false;
  ConstraintSpec constraint;
  std::vector<ElboReport> trace;
};

/// Thrown when the ELBO turns non-finite; carries the trace so far.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(const std::string& what, std::vector<ElboReport> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<ElboReport>& trace() const { return trace_; }

 private:
  std::vector<ElboReport> trace_;
};

/// Alternating stochastic variational training. Phase A updates the weight
/// posterior, covariance and likelihood-noise parameters; phase B updates
/// the constraint scale and the theta posterior. Initialization:
/// log-lengthscale log(t_max - t_min), log-amplitude log(y_max - y_min),
/// initial noise variance alpha0 / 1e5 (guarded when alpha0 <= 0), theta at
/// 0.1 in natural space.
FitResult train(const TimeSeriesDataset& data, const Architecture& arch, ConstraintSpec spec,
                const TrainConfig& config);

struct PredictResult {
  Eigen::VectorXd times;
  std::vector<Eigen::MatrixXd> f_samples;   // each n x s
  std::vector<Eigen::MatrixXd> df_samples;  // each n x s
  Eigen::MatrixXd f_mean, f_lo, f_hi;       // n x s, central 95% band
  Eigen::MatrixXd df_mean;
  Eigen::MatrixXd theta_samples;  // n_samples x p, natural space
};

PredictResult predict(const DgpModel& model, const ThetaPosterior* theta,
                      const Eigen::VectorXd& t_star, int n_samples, std::uint64_t seed);

}  // namespace cdgp

#endif  // CDGP_INFERENCE_HPP_
