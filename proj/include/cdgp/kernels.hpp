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

#ifndef CDGP_KERNELS_HPP_
#define CDGP_KERNELS_HPP_

#include <Eigen/Dense>

#include <cstdint>

#include "cdgp/tape.hpp"

namespace cdgp {

enum class KernelFamily { kRbf, kMatern };

/// Spectral random-feature kernel. The trainable hyperparameters live here
/// as current values: log_lengthscale is one entry per input dimension (ARD
/// for d_in > 1, a single shared entry for d_in = 1), log_amplitude is the
/// log marginal standard deviation. Feature dimension is always 2*n_rf
/// (cos block then sin block).
struct KernelConfig {
  KernelFamily family = KernelFamily::kRbf;
  double matern_nu = 0.5;  // in {1/2, 1, 3/2, 5/2}; used only for Matern
  int n_rf = 100;
  Eigen::MatrixXd log_lengthscale;  // 1 x d_in
  Eigen::MatrixXd log_amplitude;    // 1 x 1

  int feature_dim() const { return 2 * n_rf; }
};

/// Fixed spectral randomness: standard draws sampled once from the kernel's
/// spectral density and never resampled during training. The effective
/// frequency matrix Omega = epsilon / exp(log_lengthscale) is recomputed on
/// every evaluation so gradients reach the lengthscale.
struct SpectralDraws {
  Eigen::MatrixXd epsilon;  // n_rf x d_in
  std::uint64_t seed = 0;
};

/// Standard normal draws for RBF, Student-t with 2*nu degrees of freedom for
/// Matern. Deterministic given seed. Throws on unsupported nu.
SpectralDraws sample_spectral(const KernelConfig& config, int d_in, std::uint64_t seed);

/// Random feature map on the tape:
///   Phi = sqrt(exp(2*log_amp)/n_rf) * [cos(X Omega^T), sin(X Omega^T)].
/// Differentiable w.r.t. X, log_ell and log_amp.
diff::Var features(diff::Tape& tape, diff::Var x, diff::Var log_ell, diff::Var log_amp,
                   const SpectralDraws& draws, const KernelConfig& config);

struct FeaturePair {
  diff::Var phi;
  diff::Var dphi_dt;
};

/// Feature map together with its exact input-derivative: with Z = X Omega^T
/// and dZ = dX_dt Omega^T,
///   dPhi_dt = sqrt(exp(2*log_amp)/n_rf) * [-sin(Z) .* dZ, cos(Z) .* dZ].
FeaturePair features_with_input_derivative(diff::Tape& tape, diff::Var x, diff::Var dx_dt,
                                           diff::Var log_ell, diff::Var log_amp,
                                           const SpectralDraws& draws,
                                           const KernelConfig& config);

/// Value-only feature map (runs the tape path internally).
Eigen::MatrixXd features_value(const Eigen::MatrixXd& x, const KernelConfig& config,
                               const SpectralDraws& draws);

/// Exact covariance value k(x, y) for the configured kernel family, used by
/// the random-feature approximation checks.
double kernel_value(const KernelConfig& config, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y);

}  // namespace cdgp

#endif  // CDGP_KERNELS_HPP_
