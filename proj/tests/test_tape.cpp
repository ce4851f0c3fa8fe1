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
#include <stdexcept>

#include "cdgp/grad_check.hpp"
#include "cdgp/rng.hpp"
#include "cdgp/tape.hpp"

using namespace cdgp;
using diff::Tape;
using diff::Var;

TEST_CASE("square gradient at x = 3") {
  Tape tape;
  Var x = tape.input(Eigen::MatrixXd::Constant(1, 1, 3.0));
  Var y = diff::square(x);
  tape.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("sum of cos at zero vector has zero gradient") {
  Tape tape;
  Var x = tape.input(Eigen::MatrixXd::Zero(4, 1));
  Var y = diff::sum(diff::cos(x));
  tape.backward(y);
  CHECK(x.grad().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random feature regression graph gradient matches finite differences") {
  Rng rng(7);
  const Eigen::MatrixXd t = randn(rng, 6, 1);
  const Eigen::MatrixXd omega = randn(rng, 1, 5);
  const Eigen::MatrixXd w0 = randn(rng, 10, 2);
  auto f = [&](Tape& tape, const std::vector<Var>& vars) {
    Var z = diff::matmul(tape.constant(t), tape.constant(omega));
    Var phi = diff::hcat(diff::cos(z), diff::sin(z));
    return diff::sum(diff::matmul(phi, vars[0]));
  };
  const auto report = diff::check_gradient(f, {w0}, 1e-5);
  CHECK(report.max_rel_error < 1e-6);
}

namespace {

// One scalar objective per primitive, each evaluated away from domain edges.
std::vector<std::pair<const char*, diff::ScalarFn>> primitive_objectives() {
  return {
      {"add", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::add(v[0], v[1]));
       }},
      {"sub", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::sub(v[0], v[1]));
       }},
      {"mul", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::mul(v[0], v[1]));
       }},
      {"div", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::div(v[0], diff::shift(diff::square(v[1]), 1.0)));
       }},
      {"matmul", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::matmul(v[0], v[1]));
       }},
      {"cos_sin", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::add(diff::cos(v[0]), diff::sin(v[1])));
       }},
      {"exp", [](Tape& t, const std::vector<Var>& v) { return diff::sum(diff::exp(v[0])); }},
      {"log", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::log(diff::shift(diff::square(v[0]), 0.5)));
       }},
      {"tanh", [](Tape& t, const std::vector<Var>& v) { return diff::sum(diff::tanh(v[0])); }},
      {"square", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::square(v[0]));
       }},
      {"sqrt", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::sqrt(diff::shift(diff::square(v[0]), 0.5)));
       }},
      {"neg", [](Tape& t, const std::vector<Var>& v) { return diff::sum(diff::neg(v[0])); }},
      {"reciprocal", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::reciprocal(diff::shift(diff::square(v[0]), 1.0)));
       }},
      {"lgamma", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::lgamma(diff::shift(diff::square(v[0]), 0.5)));
       }},
      {"softplus", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::softplus(v[0]));
       }},
      {"broadcast_scalar", [](Tape& t, const std::vector<Var>& v) {
         Var s = diff::sum(v[0]);
         return diff::sum(diff::mul(diff::broadcast(s, 3, 4), t.constant(
             Eigen::MatrixXd::Constant(3, 4, 0.25))));
       }},
      {"broadcast_row", [](Tape& t, const std::vector<Var>& v) {
         Var row = diff::matmul(t.constant(Eigen::MatrixXd::Ones(1, 3)), v[0]);
         return diff::sum(diff::square(diff::broadcast(row, 5, 4)));
       }},
      {"broadcast_col", [](Tape& t, const std::vector<Var>& v) {
         Var colv = diff::matmul(v[0], t.constant(Eigen::MatrixXd::Ones(4, 1)));
         return diff::sum(diff::square(diff::broadcast(colv, 3, 6)));
       }},
      {"hcat", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::square(diff::hcat(v[0], v[1])));
       }},
      {"scale_shift", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::scale(diff::shift(v[0], 0.75), -1.5));
       }},
      {"col", [](Tape& t, const std::vector<Var>& v) {
         return diff::sum(diff::square(diff::col(v[0], 1)));
       }},
  };
}

}  // namespace

TEST_CASE("every primitive matches central finite differences at random points") {
  Rng rng(123);
  int points = 0;
  for (const auto& [name, fn] : primitive_objectives()) {
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::MatrixXd a = randn(rng, 3, 4);
      const Eigen::MatrixXd b = (name == std::string("matmul")) ? randn(rng, 4, 2)
                                                                : randn(rng, 3, 4);
      const auto report = diff::check_gradient(fn, {a, b}, 1e-5);
      INFO(name << " rep " << rep << " err " << report.max_rel_error);
      CHECK(report.max_rel_error < 1e-6);
      ++points;
    }
  }
  CHECK(points * 24 >= 100);  // coordinates checked
}

TEST_CASE("backward of a sum of two records equals the sum of separate passes") {
  Rng rng(5);
  const Eigen::MatrixXd x0 = randn(rng, 4, 3);

  auto build_f = [](Tape& tape, Var x) { return diff::sum(diff::square(x)); };
  auto build_g = [](Tape& tape, Var x) { return diff::sum(diff::cos(x)); };

  Tape tf;
  Var xf = tf.input(x0);
  tf.backward(build_f(tf, xf));
  Tape tg;
  Var xg = tg.input(x0);
  tg.backward(build_g(tg, xg));

  Tape ts;
  Var xs = ts.input(x0);
  ts.backward(diff::add(build_f(ts, xs), build_g(ts, xs)));

  CHECK((xs.grad() - (xf.grad() + xg.grad())).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("repeated backward after zeroing reproduces identical gradients") {
  Rng rng(11);
  Tape tape;
  Var x = tape.input(randn(rng, 5, 2));
  Var y = diff::sum(diff::mul(diff::exp(x), diff::sin(x)));
  tape.backward(y);
  const Eigen::MatrixXd first = x.grad();
  tape.zero_grad();
  tape.backward(y);
  CHECK((x.grad() - first).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shape mismatches are rejected with the offending shapes named") {
  Tape tape;
  Var a = tape.input(Eigen::MatrixXd::Zero(2, 3));
  Var b = tape.input(Eigen::MatrixXd::Zero(2, 3));
  CHECK_THROWS_WITH_AS(diff::matmul(a, b), doctest::Contains("2x3"), std::invalid_argument);
  CHECK_THROWS_AS(diff::broadcast(a, 5, 5), std::invalid_argument);
  Var c = tape.input(Eigen::MatrixXd::Zero(3, 1));
  CHECK_THROWS_AS(diff::add(a, c), std::invalid_argument);
}

TEST_CASE("check_gradient on a Gaussian log-density in its mean") {
  Rng rng(21);
  const Eigen::MatrixXd y = randn(rng, 8, 1);
  auto f = [&](Tape& tape, const std::vector<Var>& vars) {
    Var resid = diff::sub(tape.constant(y), diff::broadcast(vars[0], 8, 1));
    return diff::scale(diff::sum(diff::square(resid)), -0.5);
  };
  const auto report = diff::check_gradient(f, {Eigen::MatrixXd::Constant(1, 1, 0.3)}, 1e-5);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("check_gradient of a constant function is exactly zero") {
  auto f = [](Tape& tape, const std::vector<Var>&) { return tape.constant(4.0); };
  const auto report = diff::check_gradient(f, {Eigen::MatrixXd::Zero(2, 2)}, 1e-4);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("check_gradient reports the coordinate of non-finite values") {
  auto f = [](Tape& tape, const std::vector<Var>& vars) {
    return diff::sum(diff::log(vars[0]));
  };
  Eigen::MatrixXd point = Eigen::MatrixXd::Constant(2, 1, 1e-7);  // log(x - h) goes NaN
  CHECK_THROWS_WITH_AS(diff::check_gradient(f, {point}, 1e-5), doctest::Contains("(0,0)"),
                       std::runtime_error);
}

TEST_CASE("digamma agrees with finite differences of lgamma") {
  for (double x : {0.3, 0.7, 1.0, 2.5, 5.9, 6.1, 11.0, 40.0}) {
    const double h = 1e-6 * std::max(1.0, x);
    const double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
    CHECK(diff::digamma(x) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK_THROWS_AS(diff::digamma(-1.0), std::domain_error);
}

TEST_CASE("gradients flow only into tracked nodes") {
  Tape tape;
  Var x = tape.input(Eigen::MatrixXd::Constant(1, 1, 2.0));
  Var c = tape.constant(Eigen::MatrixXd::Constant(1, 1, 3.0));
  Var y = diff::mul(x, c);
  tape.backward(y);
  CHECK(x.grad()(0, 0) == 3.0);
  CHECK_THROWS_AS(c.grad(), std::logic_error);
}
