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

#include "cdgp/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cdgp/rng.hpp"

namespace cdgp {

using diff::Var;

OdeSystem lotka_volterra() {
  OdeSystem sys;
  sys.name = "lotka-volterra";
  sys.state_dim = 2;
  sys.param_dim = 4;
  sys.drift = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& th) {
    Eigen::VectorXd d(2);
    d(0) = th(0) * x(0) - th(1) * x(0) * x(1);
    d(1) = -th(2) * x(1) + th(3) * x(0) * x(1);
    return d;
  };
  sys.drift_tape = [](diff::Tape&, const Eigen::VectorXd&, Var f,
                      const std::vector<Var>& th) {
    Var f1 = diff::col(f, 0);
    Var f2 = diff::col(f, 1);
    Var cross = diff::mul(f1, f2);
    std::vector<Var> d;
    d.push_back(th[0] * f1 - th[1] * cross);
    d.push_back(th[3] * cross - th[2] * f2);
    return d;
  };
  return sys;
}

OdeSystem fitzhugh_nagumo() {
  OdeSystem sys;
  sys.name = "fhn";
  sys.state_dim = 2;
  sys.param_dim = 3;  // theta = (a, b, c) with c the timescale multiplier
  sys.drift = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& th) {
    const double a = th(0), b = th(1), c = th(2);
    Eigen::VectorXd d(2);
    d(0) = c * (x(0) - b * x(0) * x(0) * x(0) / 3.0 + x(1));
    d(1) = -(x(0) - a + b * x(1)) / c;
    return d;
  };
  sys.drift_tape = [](diff::Tape&, const Eigen::VectorXd&, Var f,
                      const std::vector<Var>& th) {
    Var a = th[0], b = th[1], c = th[2];
    Var f1 = diff::col(f, 0);
    Var f2 = diff::col(f, 1);
    Var cube = diff::mul(diff::square(f1), f1);
    std::vector<Var> d;
    d.push_back(c * (f1 - b * (cube / 3.0) + f2));
    d.push_back(-(diff::reciprocal(c) * (f1 - a + b * f2)));
    return d;
  };
  return sys;
}

OdeSystem biopathways() {
  OdeSystem sys;
  sys.name = "biopathways";
  sys.state_dim = 5;
  sys.param_dim = 6;  // theta = (k1, k2, k3, k4, V, Km)
  sys.drift = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& th) {
    const double k1 = th(0), k2 = th(1), k3 = th(2), k4 = th(3), V = th(4), Km = th(5);
    if (Km + x(4) == 0.0) {
      throw std::domain_error("biopathways drift: singular Michaelis-Menten term, Km + f5 = 0");
    }
    const double mm = V * x(4) / (Km + x(4));
    Eigen::VectorXd d(5);
    d(0) = -k1 * x(0) - k2 * x(0) * x(2) + k3 * x(3);
    d(1) = k1 * x(0);
    d(2) = -k2 * x(0) * x(2) + k3 * x(3) + mm;
    d(3) = k2 * x(0) * x(2) - k3 * x(3) - k4 * x(3);
    d(4) = k4 * x(3) - mm;
    return d;
  };
  sys.drift_tape = [](diff::Tape&, const Eigen::VectorXd&, Var f,
                      const std::vector<Var>& th) {
    Var k1 = th[0], k2 = th[1], k3 = th[2], k4 = th[3], V = th[4], Km = th[5];
    Var f1 = diff::col(f, 0);
    Var f3 = diff::col(f, 2);
    Var f4 = diff::col(f, 3);
    Var f5 = diff::col(f, 4);
    Var bind = k2 * diff::mul(f1, f3);
    Var release = k3 * f4;
    Var mm = (V * f5) / (Km + f5);
    std::vector<Var> d;
    d.push_back(-(k1 * f1) - bind + release);
    d.push_back(k1 * f1);
    d.push_back(-bind + release + mm);
    d.push_back(bind - release - k4 * f4);
    d.push_back(k4 * f4 - mm);
    return d;
  };
  return sys;
}

OdeSystem lorenz96(int state_dim) {
  if (state_dim < 4) throw std::invalid_argument("lorenz96: needs at least 4 states");
  OdeSystem sys;
  sys.name = "lorenz96";
  sys.state_dim = state_dim;
  sys.param_dim = 1;
  const int s = state_dim;
  sys.drift = [s](double, const Eigen::VectorXd& x, const Eigen::VectorXd& th) {
    Eigen::VectorXd d(s);
    for (int i = 0; i < s; ++i) {
      const int ip1 = (i + 1) % s;
      const int im1 = (i - 1 + s) % s;
      const int im2 = (i - 2 + s) % s;
      d(i) = (x(ip1) - x(im2)) * x(im1) - x(i) + th(0);
    }
    return d;
  };
  sys.drift_tape = [s](diff::Tape&, const Eigen::VectorXd&, Var f,
                       const std::vector<Var>& th) {
    std::vector<Var> cols;
    cols.reserve(s);
    for (int i = 0; i < s; ++i) cols.push_back(diff::col(f, i));
    std::vector<Var> d;
    d.reserve(s);
    for (int i = 0; i < s; ++i) {
      const int ip1 = (i + 1) % s;
      const int im1 = (i - 1 + s) % s;
      const int im2 = (i - 2 + s) % s;
      d.push_back(diff::mul(cols[ip1] - cols[im2], cols[im1]) - cols[i] + th[0]);
    }
    return d;
  };
  return sys;
}

Eigen::MatrixXd integrate_rk4(const OdeSystem& system, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& x0, const Eigen::VectorXd& t_grid,
                              double step) {
  if (!(step > 0.0)) throw std::invalid_argument("integrate_rk4: step must be > 0");
  const int n = static_cast<int>(t_grid.size());
  if (n < 1) throw std::invalid_argument("integrate_rk4: empty time grid");
  for (int i = 1; i < n; ++i) {
    if (!(t_grid(i) > t_grid(i - 1))) {
      throw std::invalid_argument("integrate_rk4: time grid must be increasing");
    }
  }
  Eigen::MatrixXd out(n, x0.size());
  Eigen::VectorXd x = x0;
  out.row(0) = x.transpose();
  double t = t_grid(0);
  for (int i = 1; i < n; ++i) {
    const double dt = t_grid(i) - t_grid(i - 1);
    const int n_sub = std::max(1, static_cast<int>(std::ceil(dt / step - 1e-12)));
    const double h = dt / n_sub;
    for (int k = 0; k < n_sub; ++k) {
      const Eigen::VectorXd k1 = system.drift(t, x, theta);
      const Eigen::VectorXd k2 = system.drift(t + 0.5 * h, x + 0.5 * h * k1, theta);
      const Eigen::VectorXd k3 = system.drift(t + 0.5 * h, x + 0.5 * h * k2, theta);
      const Eigen::VectorXd k4 = system.drift(t + h, x + h * k3, theta);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
    }
    t = t_grid(i);  // land exactly, avoiding accumulated rounding
    if (!x.allFinite()) {
      throw std::runtime_error("integrate_rk4: non-finite state at t = " + std::to_string(t) +
                               " for system " + system.name);
    }
    out.row(i) = x.transpose();
  }
  return out;
}

namespace {

Eigen::VectorXd linspace(double a, double b, int n) {
  return Eigen::VectorXd::LinSpaced(n, a, b);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Splits "family/variant"; throws on malformed names.
std::pair<std::string, std::string> split_name(const std::string& name) {
  const auto slash = name.find('/');
  if (slash == std::string::npos || slash + 1 >= name.size()) {
    throw std::invalid_argument("unknown scenario '" + name + "' (expected family/variant)");
  }
  return {name.substr(0, slash), name.substr(slash + 1)};
}

int parse_positive_int(const std::string& text, const std::string& name) {
  try {
    const int value = std::stoi(text);
    if (value < 1) throw std::invalid_argument("");
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
}

}  // namespace

Scenario find_scenario(const std::string& name) {
  const auto [family, variant] = split_name(name);
  Scenario sc;
  sc.name = name;
  if (family == "lotka-volterra") {
    sc.system = lotka_volterra();
    sc.theta_true = vec({0.2, 0.35, 0.7, 0.4});
    sc.x0 = vec({1.0, 2.0});
    if (variant == "1") {
      sc.times = linspace(0.0, 30.0, 34);
      sc.noise_std = 0.25;
    } else if (variant == "2") {
      sc.times = linspace(0.0, 30.0, 51);
      sc.noise_std = 0.4;
    } else if (variant.size() > 1 && variant[0] == 'n') {
      sc.times = linspace(0.0, 30.0, parse_positive_int(variant.substr(1), name));
      sc.noise_std = 0.25;
    } else {
      throw std::invalid_argument("unknown scenario '" + name + "'");
    }
  } else if (family == "fhn") {
    sc.system = fitzhugh_nagumo();
    sc.theta_true = vec({0.2, 0.2, 3.0});
    sc.x0 = vec({-1.0, 1.0});
    sc.noise_std = 0.5;
    if (variant == "1") {
      sc.times = linspace(0.0, 20.0, 401);
    } else if (variant == "2") {
      sc.times = linspace(0.0, 20.0, 20);
    } else if (variant.size() > 1 && variant[0] == 'n') {
      sc.times = linspace(0.0, 20.0, parse_positive_int(variant.substr(1), name));
    } else {
      throw std::invalid_argument("unknown scenario '" + name + "'");
    }
  } else if (family == "biopathways") {
    sc.system = biopathways();
    sc.theta_true = vec({0.07, 0.6, 0.05, 0.3, 0.017, 0.3});
    sc.x0 = vec({1.0, 0.0, 1.0, 0.0, 0.0});
    sc.times = vec({0, 1, 2, 4, 5, 7, 10, 15, 20, 30, 40, 50, 60, 80, 100});
    if (variant == "1") {
      sc.noise_std = std::sqrt(0.1);
    } else if (variant == "2") {
      sc.noise_std = std::sqrt(0.05);
    } else {
      throw std::invalid_argument("unknown scenario '" + name + "'");
    }
  } else if (family == "lorenz96") {
    const int s = parse_positive_int(variant, name);
    if (s < 4) throw std::invalid_argument("unknown scenario '" + name + "' (need >= 4 states)");
    sc.system = lorenz96(s);
    sc.theta_true = vec({8.0});
    sc.times = linspace(0.0, 4.0, 32);
    sc.noise_std = 1.0;  // sigma^2 = 1
  } else if (family == "monotonic-counts") {
    if (variant != "1") throw std::invalid_argument("unknown scenario '" + name + "'");
    sc.poisson_counts = true;
    sc.times = linspace(0.0, 10.0, 60);
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  return sc;
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd count_rates(const Scenario& sc) {
  Eigen::MatrixXd rate(sc.times.size(), 1);
  for (Eigen::Index i = 0; i < sc.times.size(); ++i) {
    rate(i, 0) = std::exp(sc.count_a + sc.count_b * logistic(sc.times(i) - sc.count_c));
  }
  return rate;
}

Eigen::VectorXd fold_x0(const Scenario& sc, Rng& rng) {
  if (sc.x0.size() > 0) return sc.x0;
  return Eigen::VectorXd(randn(rng, sc.system.state_dim, 1));
}

}  // namespace

TimeSeriesDataset generate_dataset(const Scenario& scenario, std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  TimeSeriesDataset data;
  data.times = scenario.times;
  if (scenario.poisson_counts) {
    const Eigen::MatrixXd rate = count_rates(scenario);
    data.y.resize(rate.rows(), 1);
    for (Eigen::Index i = 0; i < rate.rows(); ++i) {
      std::poisson_distribution<long> dist(rate(i, 0));
      data.y(i, 0) = static_cast<double>(dist(rng));
    }
    data.likelihood.assign(1, LikelihoodKind::kPoisson);
    return data;
  }
  const Eigen::VectorXd x0 = fold_x0(scenario, rng);
  const Eigen::MatrixXd truth = integrate_rk4(scenario.system, scenario.theta_true, x0,
                                              scenario.times, scenario.integrate_step);
  data.y = truth + scenario.noise_std * randn(rng, truth.rows(), truth.cols());
  data.likelihood.assign(truth.cols(), LikelihoodKind::kGaussian);
  return data;
}

Eigen::MatrixXd scenario_truth(const Scenario& scenario, const Eigen::VectorXd& times,
                               std::uint64_t fold_seed) {
  if (scenario.poisson_counts) {
    Scenario at = scenario;
    at.times = times;
    return count_rates(at);
  }
  Rng rng(fold_seed);
  const Eigen::VectorXd x0 = fold_x0(scenario, rng);
  return integrate_rk4(scenario.system, scenario.theta_true, x0, times,
                       scenario.integrate_step);
}

std::vector<int> unobserved_every_third(int state_dim) {
  std::vector<int> out;
  for (int i = 2; i < state_dim; i += 3) out.push_back(i);
  return out;
}

std::vector<int> unobserved_random_third(int state_dim, std::uint64_t seed) {
  std::vector<int> order(state_dim);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(state_dim / 3);
  std::sort(order.begin(), order.end());
  return order;
}

void mask_states(TimeSeriesDataset& data, const std::vector<int>& states) {
  for (int j : states) {
    data.y.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
  }
}

void write_dataset_csv(const TimeSeriesDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t";
  for (int j = 0; j < data.dim(); ++j) out << ",y" << (j + 1);
  out << "\n";
  char buf[32];
  for (int i = 0; i < data.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.times(i));
    out << buf;
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.y(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

TimeSeriesDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
  int cols = 0;
  for (char c : line) cols += (c == ',');
  if (cols < 1) throw std::runtime_error("dataset " + path + " has no observation columns");
  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int field = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (field == 0) {
        times.push_back(v);
      } else {
        values.push_back(v);
      }
      ++field;
    }
    if (field != cols + 1) throw std::runtime_error("ragged row in " + path);
  }
  TimeSeriesDataset data;
  const int n = static_cast<int>(times.size());
  data.times = Eigen::Map<Eigen::VectorXd>(times.data(), n);
  data.y.resize(n, cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cols; ++j) data.y(i, j) = values[static_cast<size_t>(i) * cols + j];
  data.likelihood.assign(cols, LikelihoodKind::kGaussian);
  return data;
}

}  // namespace cdgp
