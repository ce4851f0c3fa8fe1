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

#ifndef CDGP_DGP_HPP_
#define CDGP_DGP_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "cdgp/kernels.hpp"
#include "cdgp/rng.hpp"
#include "cdgp/tape.hpp"

namespace cdgp {

/// One random-feature GP layer. The variational posterior over the linear
/// weights factorizes completely: q(W) = prod N(m_jk, s_jk^2) with standard
/// normal prior on every entry; weight_log_std stores log s.
struct Layer {
  KernelConfig kernel;
  SpectralDraws draws;
  Eigen::MatrixXd weight_mean;     // 2*n_rf x d_out
  Eigen::MatrixXd weight_log_std;  // 2*n_rf x d_out
  int d_in = 0;
  int d_out = 0;
};

struct Architecture {
  int depth = 2;
  int hidden_width = 2;
  KernelFamily family = KernelFamily::kRbf;
  double matern_nu = 0.5;
  int n_rf = 100;
};

/// Ordered composition of layers; output dims chain. log_noise_std holds the
/// per-output-dimension Gaussian observation noise (1 x s); left empty for
/// count likelihoods.
struct DgpModel {
  std::vector<Layer> layers;
  Eigen::MatrixXd log_noise_std;

  int input_dim() const { return layers.front().d_in; }
  int output_dim() const { return layers.back().d_out; }
  int depth() const { return static_cast<int>(layers.size()); }
};

/// Builds a model with the standard initialization: weight means zero,
/// weight log-std -2, log-lengthscale lambda0 and log-amplitude alpha0 on
/// every layer, observation noise sigma0. Spectral draws are fixed from
/// spectral_seed (one stream per layer).
DgpModel build_dgp(const Architecture& arch, int input_dim, int output_dim, double lambda0,
                   double alpha0, double sigma0, std::uint64_t spectral_seed,
                   double weight_log_std0 = -2.0);

/// Tape bindings of all trainable model values for one evaluation.
struct LayerVars {
  diff::Var weight_mean, weight_log_std, log_ell, log_amp;
};
struct DgpVars {
  std::vector<LayerVars> layers;
  diff::Var log_noise_std;
  bool has_noise = false;
};

/// Binds parameters as tracked inputs (training) or constants (prediction).
DgpVars bind_dgp(diff::Tape& tape, const DgpModel& model, bool tracked);

/// Reparameterized weight draw per layer: W = m + exp(log s) .* eps.
std::vector<diff::Var> sample_weights(diff::Tape& tape, const DgpModel& model,
                                      const DgpVars& vars, Rng& rng);

/// Function values and exact time-derivatives of one weight path. Layer
/// recursion: U0 = t, dU0 = 1; (Phi, dPhi) from the feature map;
/// U <- Phi W, dU <- dPhi W.
struct PathVars {
  diff::Var f;      // n x s
  diff::Var df_dt;  // n x s
};

/// First-layer feature nodes, reusable across weight samples within one
/// tape evaluation: the first layer's input is the fixed time grid, so its
/// trigonometric features do not depend on the sampled weights.
struct SharedFeatures {
  bool ready = false;
  diff::Var cos_z, sin_z, d_cos, d_sin, amp_full;
};

PathVars forward_with_derivative(diff::Tape& tape, const DgpModel& model, const DgpVars& vars,
                                 const std::vector<diff::Var>& weights,
                                 const Eigen::VectorXd& t, SharedFeatures* shared = nullptr);

/// KL(q(W) || p(W)) against the standard normal prior, closed form:
/// sum of 0.5 (m^2 + s^2 - 1 - 2 log s).
diff::Var kl_weights(diff::Tape& tape, const DgpVars& vars);
double kl_weights_value(const DgpModel& model);

/// Value-only path draw (weights sampled from q), for prediction.
struct PathSample {
  Eigen::MatrixXd f, df_dt;
};
PathSample sample_path(const DgpModel& model, const Eigen::VectorXd& t, Rng& rng);

}  // namespace cdgp

#endif  // CDGP_DGP_HPP_
