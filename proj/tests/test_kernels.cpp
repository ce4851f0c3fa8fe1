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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdgp/grad_check.hpp"
#include "cdgp/kernels.hpp"
#include "cdgp/rng.hpp"

using namespace cdgp;
using diff::Tape;
using diff::Var;

namespace {

KernelConfig rbf_config(int n_rf, double log_ell = 0.0, double log_amp = 0.0, int d_in = 1) {
  KernelConfig cfg;
  cfg.family = KernelFamily::kRbf;
  cfg.n_rf = n_rf;
  cfg.log_lengthscale = Eigen::MatrixXd::Constant(1, d_in, log_ell);
  cfg.log_amplitude = Eigen::MatrixXd::Constant(1, 1, log_amp);
  return cfg;
}

}  // namespace

TEST_CASE("spectral draws are deterministic given the seed") {
  const KernelConfig cfg = rbf_config(64);
  const SpectralDraws a = sample_spectral(cfg, 1, 42);
  const SpectralDraws b = sample_spectral(cfg, 1, 42);
  CHECK(a.epsilon == b.epsilon);
  const SpectralDraws c = sample_spectral(cfg, 1, 43);
  CHECK(a.epsilon != c.epsilon);
}

TEST_CASE("RBF draws have unit sample variance") {
  KernelConfig cfg = rbf_config(100000);
  const SpectralDraws draws = sample_spectral(cfg, 1, 7);
  const double mean = draws.epsilon.mean();
  const double var = (draws.epsilon.array() - mean).square().sum() / (draws.epsilon.size() - 1);
  CHECK(var > 0.99);
  CHECK(var < 1.01);
}

TEST_CASE("Matern nu=1/2 draws are Cauchy: median absolute value near 1") {
  KernelConfig cfg = rbf_config(100000);
  cfg.family = KernelFamily::kMatern;
  cfg.matern_nu = 0.5;
  const SpectralDraws draws = sample_spectral(cfg, 1, 3);
  std::vector<double> abs_vals(draws.epsilon.data(), draws.epsilon.data() + draws.epsilon.size());
  for (double& v : abs_vals) v = std::abs(v);
  std::nth_element(abs_vals.begin(), abs_vals.begin() + abs_vals.size() / 2, abs_vals.end());
  const double median = abs_vals[abs_vals.size() / 2];
  CHECK(median == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("unsupported Matern degree is rejected") {
  KernelConfig cfg = rbf_config(8);
  cfg.family = KernelFamily::kMatern;
  cfg.matern_nu = 2.0;
  CHECK_THROWS_AS(sample_spectral(cfg, 1, 1), std::invalid_argument);
}

TEST_CASE("zero input row gives constant cos block and zero sin block") {
  KernelConfig cfg = rbf_config(16, 0.3, 0.7);
  const SpectralDraws draws = sample_spectral(cfg, 1, 5);
  const Eigen::MatrixXd phi = features_value(Eigen::MatrixXd::Zero(1, 1), cfg, draws);
  const double expect = std::sqrt(std::exp(2.0 * 0.7) / cfg.n_rf);
  for (int j = 0; j < cfg.n_rf; ++j) {
    CHECK(phi(0, j) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(phi(0, cfg.n_rf + j) == 0.0);
  }
}

TEST_CASE("feature inner products approximate the RBF kernel") {
  KernelConfig cfg = rbf_config(5000, 0.2, 0.35);
  const SpectralDraws draws = sample_spectral(cfg, 1, 11);
  Rng rng(99);
  const double amp2 = std::exp(2.0 * 0.35);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd xy = 1.5 * randn(rng, 2, 1);
    const Eigen::MatrixXd phi = features_value(xy, cfg, draws);
    const double approx = phi.row(0).dot(phi.row(1));
    const double exact = kernel_value(cfg, xy.row(0), xy.row(1));
    CHECK(std::abs(approx - exact) <= 0.02 * amp2);
  }
}

TEST_CASE("kernel approximation obeys the Monte Carlo rate bound") {
  for (KernelFamily family : {KernelFamily::kRbf, KernelFamily::kMatern}) {
    KernelConfig cfg = rbf_config(1000, -0.1, 0.25);
    cfg.family = family;
    cfg.matern_nu = 0.5;
    const SpectralDraws draws = sample_spectral(cfg, 1, 17);
    Rng rng(31);
    const double amp2 = std::exp(2.0 * 0.25);
    const double bound = 3.0 * amp2 / std::sqrt(static_cast<double>(cfg.n_rf));
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::MatrixXd xy = randn(rng, 2, 1);
      const Eigen::MatrixXd phi = features_value(xy, cfg, draws);
      const double approx = phi.row(0).dot(phi.row(1));
      const double exact = kernel_value(cfg, xy.row(0), xy.row(1));
      INFO("family " << (family == KernelFamily::kRbf ? "rbf" : "matern") << " rep " << rep);
      CHECK(std::abs(approx - exact) <= bound);
    }
  }
}

TEST_CASE("doubling the amplitude doubles the features exactly") {
  KernelConfig cfg = rbf_config(32, 0.1, 0.4);
  const SpectralDraws draws = sample_spectral(cfg, 1, 2);
  Rng rng(3);
  const Eigen::MatrixXd x = randn(rng, 4, 1);
  const Eigen::MatrixXd phi = features_value(x, cfg, draws);
  KernelConfig doubled = cfg;
  doubled.log_amplitude.array() += std::log(2.0);
  const Eigen::MatrixXd phi2 = features_value(x, doubled, draws);
  CHECK((phi2 - 2.0 * phi).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("lengthscale reparameterization leaves features unchanged") {
  KernelConfig cfg = rbf_config(24, 0.2, 0.1);
  const SpectralDraws draws = sample_spectral(cfg, 1, 9);
  Rng rng(13);
  const Eigen::MatrixXd x = randn(rng, 5, 1);
  const double c = 2.7;
  KernelConfig scaled = cfg;
  scaled.log_lengthscale.array() += std::log(c);
  const Eigen::MatrixXd phi = features_value(x, cfg, draws);
  const Eigen::MatrixXd phi_scaled = features_value(c * x, scaled, draws);
  CHECK((phi - phi_scaled).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero input derivative gives zero feature derivative") {
  KernelConfig cfg = rbf_config(16);
  const SpectralDraws draws = sample_spectral(cfg, 1, 21);
  Tape tape;
  Rng rng(4);
  Var x = tape.constant(randn(rng, 3, 1));
  Var dx = tape.constant(Eigen::MatrixXd::Zero(3, 1));
  const FeaturePair fp = features_with_input_derivative(
      tape, x, dx, tape.constant(cfg.log_lengthscale), tape.constant(cfg.log_amplitude), draws,
      cfg);
  CHECK(fp.dphi_dt.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feature time-derivative matches central finite differences") {
  KernelConfig cfg = rbf_config(32, -0.2, 0.3);
  const SpectralDraws draws = sample_spectral(cfg, 1, 23);
  Rng rng(6);
  const double h = 1e-6;
  for (int rep = 0; rep < 10; ++rep) {
    const double t0 = 2.0 * randn(rng, 1, 1)(0, 0);
    auto phi_at = [&](double t) {
      return features_value(Eigen::MatrixXd::Constant(1, 1, t), cfg, draws);
    };
    const Eigen::MatrixXd fd = (phi_at(t0 + h) - phi_at(t0 - h)) / (2.0 * h);

    Tape tape;
    const FeaturePair fp = features_with_input_derivative(
        tape, tape.constant(Eigen::MatrixXd::Constant(1, 1, t0)),
        tape.constant(Eigen::MatrixXd::Ones(1, 1)), tape.constant(cfg.log_lengthscale),
        tape.constant(cfg.log_amplitude), draws, cfg);
    const double rel = (fp.dphi_dt.value() - fd).cwiseAbs().maxCoeff() /
                       (fd.cwiseAbs().maxCoeff() + 1e-12);
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("constant shift with unit input derivative matches the analytic form") {
  // At X + c with dX_dt = 1: dPhi = scale * [-sin(Z) .* (Omega row sums),
  // cos(Z) .* (Omega row sums)] for a single input dimension.
  KernelConfig cfg = rbf_config(8, 0.15, 0.0);
  const SpectralDraws draws = sample_spectral(cfg, 1, 29);
  const double t0 = 0.8, c = 0.5;
  Tape tape;
  const FeaturePair fp = features_with_input_derivative(
      tape, tape.constant(Eigen::MatrixXd::Constant(1, 1, t0 + c)),
      tape.constant(Eigen::MatrixXd::Ones(1, 1)), tape.constant(cfg.log_lengthscale),
      tape.constant(cfg.log_amplitude), draws, cfg);
  const double scale = std::sqrt(1.0 / cfg.n_rf);
  const Eigen::VectorXd omega = draws.epsilon.col(0) / std::exp(0.15);
  for (int j = 0; j < cfg.n_rf; ++j) {
    const double z = (t0 + c) * omega(j);
    CHECK(fp.dphi_dt.value()(0, j) ==
          doctest::Approx(-scale * std::sin(z) * omega(j)).epsilon(1e-12));
    CHECK(fp.dphi_dt.value()(0, cfg.n_rf + j) ==
          doctest::Approx(scale * std::cos(z) * omega(j)).epsilon(1e-12));
  }
}

TEST_CASE("features differentiate w.r.t. lengthscale and amplitude") {
  KernelConfig cfg = rbf_config(12, 0.0, 0.0);
  const SpectralDraws draws = sample_spectral(cfg, 1, 37);
  Rng rng(8);
  const Eigen::MatrixXd x = randn(rng, 4, 1);
  const Eigen::MatrixXd r = randn(rng, 4, 2 * cfg.n_rf);
  auto f = [&](Tape& tape, const std::vector<Var>& vars) {
    Var phi = features(tape, tape.constant(x), vars[0], vars[1], draws, cfg);
    return diff::sum(diff::mul(phi, tape.constant(r)));
  };
  const auto report = diff::check_gradient(
      f, {Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::MatrixXd::Constant(1, 1, -0.1)}, 1e-6);
  CHECK(report.max_rel_error < 1e-6);
}
