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

#include <cmath>

#include "cdgp/grad_check.hpp"
#include "cdgp/likelihoods.hpp"
#include "cdgp/rng.hpp"

using namespace cdgp;
using diff::Tape;
using diff::Var;

namespace {

// Test-side reference for the normal log-pdf, independent of the tape path.
double normal_logpdf(double y, double mu, double sigma) {
  const double z = (y - mu) / sigma;
  return -0.5 * std::log(2.0 * M_PI) - std::log(sigma) - 0.5 * z * z;
}

}  // namespace

TEST_CASE("gaussian log-lik at the mode is -0.9189385 per entry") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(6, 2, 1.4);
  const double ll = gaussian_log_lik_value(y, y, Eigen::VectorXd::Ones(2));
  CHECK(ll == doctest::Approx(-0.9189385 * 12.0).epsilon(1e-7));
}

TEST_CASE("one-sigma residuals cost 0.5 per entry") {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Zero(5, 1);
  const double sigma = 0.7;
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 1, sigma);
  const double ll = gaussian_log_lik_value(y, f, Eigen::VectorXd::Constant(1, sigma));
  const double at_mode = gaussian_log_lik_value(f, f, Eigen::VectorXd::Constant(1, sigma));
  CHECK(ll == doctest::Approx(at_mode - 0.5 * 5.0).epsilon(1e-12));
}

TEST_CASE("gaussian log-lik matches an independent normal log-pdf") {
  Rng rng(3);
  const Eigen::MatrixXd y = randn(rng, 7, 3);
  const Eigen::MatrixXd f = randn(rng, 7, 3);
  Eigen::VectorXd sigma(3);
  sigma << 0.3, 1.1, 2.4;
  double expect = 0.0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) expect += normal_logpdf(y(i, j), f(i, j), sigma(j));
  CHECK(gaussian_log_lik_value(y, f, sigma) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("NaN entries are ignored") {
  Rng rng(5);
  Eigen::MatrixXd y = randn(rng, 4, 2);
  const Eigen::MatrixXd f = randn(rng, 4, 2);
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(2, 0.8);
  Eigen::MatrixXd y_obs = y.col(0);
  const double full_col = gaussian_log_lik_value(y_obs, f.col(0), sigma.head(1));
  y.col(1).setConstant(std::numeric_limits<double>::quiet_NaN());
  CHECK(gaussian_log_lik_value(y, f, sigma) == doctest::Approx(full_col).epsilon(1e-12));
}

TEST_CASE("gaussian log-lik is maximized over F at F = Y") {
  Rng rng(9);
  const Eigen::MatrixXd y = randn(rng, 5, 2);
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(2, 0.6);
  const double at_mode = gaussian_log_lik_value(y, y, sigma);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd f = y + 0.3 * randn(rng, 5, 2);
    CHECK(gaussian_log_lik_value(y, f, sigma) < at_mode);
  }
}

TEST_CASE("poisson handbook values") {
  // y = 0 -> -exp(f) per entry
  Eigen::MatrixXd f = Eigen::MatrixXd::Constant(3, 1, 0.4);
  CHECK(poisson_log_lik_value(Eigen::MatrixXd::Zero(3, 1), f) ==
        doctest::Approx(-3.0 * std::exp(0.4)).epsilon(1e-12));
  // y = 1, f = 0 -> -1
  CHECK(poisson_log_lik_value(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1)) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  // y = 5, f = log 5 -> Poisson(5) pmf at 5
  CHECK(poisson_log_lik_value(Eigen::MatrixXd::Constant(1, 1, 5.0),
                              Eigen::MatrixXd::Constant(1, 1, std::log(5.0))) ==
        doctest::Approx(-1.7403021).epsilon(1e-6));
}

TEST_CASE("poisson rejects negative and fractional counts") {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(poisson_log_lik_value(Eigen::MatrixXd::Constant(1, 1, -1.0), f),
                  std::invalid_argument);
  CHECK_THROWS_AS(poisson_log_lik_value(Eigen::MatrixXd::Constant(1, 1, 2.5), f),
                  std::invalid_argument);
}

TEST_CASE("poisson log-lik is maximized at f = log y and unimodal per entry") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(1, 1, 7.0);
  const double f_star = std::log(7.0);
  auto ll = [&](double f) {
    return poisson_log_lik_value(y, Eigen::MatrixXd::Constant(1, 1, f));
  };
  const double at_mode = ll(f_star);
  double prev = ll(f_star - 2.0);
  for (double f = f_star - 1.5; f < f_star - 1e-9; f += 0.25) {
    CHECK(ll(f) > prev);  // increasing left of the mode
    prev = ll(f);
  }
  prev = ll(f_star);
  for (double f = f_star + 0.25; f < f_star + 2.0; f += 0.25) {
    CHECK(ll(f) < prev);  // decreasing right of the mode
    prev = ll(f);
  }
  CHECK(at_mode > ll(f_star - 0.1));
  CHECK(at_mode > ll(f_star + 0.1));
}

TEST_CASE("likelihood gradients match finite differences") {
  Rng rng(13);
  const Eigen::MatrixXd y = randn(rng, 6, 2);
  auto gauss = [&](Tape& tape, const std::vector<Var>& vars) {
    return gaussian_log_lik(tape, y, vars[0], vars[1]);
  };
  const auto g_report = diff::check_gradient(
      gauss, {randn(rng, 6, 2), Eigen::MatrixXd::Constant(1, 2, -0.2)}, 1e-5);
  CHECK(g_report.max_rel_error < 1e-6);

  Eigen::MatrixXd counts(4, 1);
  counts << 0, 3, 1, 6;
  auto pois = [&](Tape& tape, const std::vector<Var>& vars) {
    return poisson_log_lik(tape, counts, vars[0]);
  };
  const auto p_report = diff::check_gradient(pois, {randn(rng, 4, 1)}, 1e-5);
  CHECK(p_report.max_rel_error < 1e-6);
}
