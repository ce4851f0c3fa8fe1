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

#include "cdgp/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "cdgp/rng.hpp"

namespace cdgp {

namespace {

bool supported_nu(double nu) {
  return nu == 0.5 || nu == 1.0 || nu == 1.5 || nu == 2.5;
}

}  // namespace

SpectralDraws sample_spectral(const KernelConfig& config, int d_in, std::uint64_t seed) {
  if (config.n_rf < 1) throw std::invalid_argument("sample_spectral: n_rf must be >= 1");
  if (d_in < 1) throw std::invalid_argument("sample_spectral: d_in must be >= 1");
  Rng rng(seed);
  SpectralDraws draws;
  draws.seed = seed;
  if (config.family == KernelFamily::kRbf) {
    draws.epsilon = randn(rng, config.n_rf, d_in);
  } else {
    if (!supported_nu(config.matern_nu)) {
      throw std::invalid_argument("sample_spectral: unsupported Matern nu " +
                                  std::to_string(config.matern_nu));
    }
    draws.epsilon = rand_student_t(rng, 2.0 * config.matern_nu, config.n_rf, d_in);
  }
  return draws;
}

namespace {

using diff::Var;

struct FeatureCore {
  Var z;        // n x n_rf, equals X Omega^T
  Var scale;    // 1 x 1, exp(log_amp)/sqrt(n_rf)
  Var inv_ell;  // 1 x d_in
};

FeatureCore feature_core(diff::Tape& tape, Var x, Var log_ell, Var log_amp,
                         const SpectralDraws& draws, const KernelConfig& config) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d_in = x.cols();
  if (log_ell.cols() != d_in || log_ell.rows() != 1) {
    throw std::invalid_argument("features: log_lengthscale must be 1x" + std::to_string(d_in));
  }
  if (draws.epsilon.cols() != d_in) {
    throw std::invalid_argument("features: spectral draws have " +
                                std::to_string(draws.epsilon.cols()) + " columns, input has " +
                                std::to_string(d_in));
  }
  FeatureCore core;
  core.inv_ell = diff::exp(diff::neg(log_ell));
  Var x_scaled = diff::mul(x, diff::broadcast(core.inv_ell, n, d_in));
  Var eps_t = tape.constant(Eigen::MatrixXd(draws.epsilon.transpose()));
  core.z = diff::matmul(x_scaled, eps_t);
  core.scale = diff::scale(diff::exp(log_amp), 1.0 / std::sqrt(static_cast<double>(config.n_rf)));
  return core;
}

}  // namespace

Var features(diff::Tape& tape, Var x, Var log_ell, Var log_amp, const SpectralDraws& draws,
             const KernelConfig& config) {
  FeatureCore core = feature_core(tape, x, log_ell, log_amp, draws, config);
  const diff::CosSin cs = diff::cos_sin(core.z);
  Var blocks = diff::hcat(cs.cos, cs.sin);
  return diff::mul(diff::broadcast(core.scale, blocks.rows(), blocks.cols()), blocks);
}

FeaturePair features_with_input_derivative(diff::Tape& tape, Var x, Var dx_dt, Var log_ell,
                                           Var log_amp, const SpectralDraws& draws,
                                           const KernelConfig& config) {
  if (dx_dt.rows() != x.rows() || dx_dt.cols() != x.cols()) {
    throw std::invalid_argument("features_with_input_derivative: dX_dt shape mismatch");
  }
  FeatureCore core = feature_core(tape, x, log_ell, log_amp, draws, config);
  const Eigen::Index n = x.rows();
  const Eigen::Index d_in = x.cols();
  Var dx_scaled = diff::mul(dx_dt, diff::broadcast(core.inv_ell, n, d_in));
  Var eps_t = tape.constant(Eigen::MatrixXd(draws.epsilon.transpose()));
  Var dz = diff::matmul(dx_scaled, eps_t);

  const diff::CosSin cs = diff::cos_sin(core.z);
  Var cos_z = cs.cos;
  Var sin_z = cs.sin;
  Var scale_full = diff::broadcast(core.scale, n, 2 * config.n_rf);

  FeaturePair out;
  out.phi = diff::mul(scale_full, diff::hcat(cos_z, sin_z));
  out.dphi_dt = diff::mul(
      scale_full, diff::hcat(diff::mul(diff::neg(sin_z), dz), diff::mul(cos_z, dz)));
  return out;
}

Eigen::MatrixXd features_value(const Eigen::MatrixXd& x, const KernelConfig& config,
                               const SpectralDraws& draws) {
  diff::Tape tape;
  Var xv = tape.constant(x);
  Var ell = tape.constant(config.log_lengthscale);
  Var amp = tape.constant(config.log_amplitude);
  return features(tape, xv, ell, amp, draws, config).value();
}

namespace {

double matern_correlation(double nu, double u) {
  if (u <= 0.0) return 1.0;
  if (nu == 0.5) return std::exp(-u);
  if (nu == 1.5) {
    const double a = std::sqrt(3.0) * u;
    return (1.0 + a) * std::exp(-a);
  }
  if (nu == 2.5) {
    const double a = std::sqrt(5.0) * u;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  // General form via the modified Bessel function of the second kind.
  const double a = std::sqrt(2.0 * nu) * u;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(a, nu) * std::cyl_bessel_k(nu, a);
}

}  // namespace

double kernel_value(const KernelConfig& config, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y) {
  const double amp2 = std::exp(2.0 * config.log_amplitude(0, 0));
  if (config.family == KernelFamily::kRbf) {
    double q = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double d = (x(j) - y(j)) / std::exp(config.log_lengthscale(0, j));
      q += d * d;
    }
    return amp2 * std::exp(-0.5 * q);
  }
  // Product of one-dimensional Matern correlations, matching the
  // per-coordinate Student-t spectral draws.
  double rho = 1.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double u = std::abs(x(j) - y(j)) / std::exp(config.log_lengthscale(0, j));
    rho *= matern_correlation(config.matern_nu, u);
  }
  return amp2 * rho;
}

}  // namespace cdgp
