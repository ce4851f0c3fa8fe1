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

#ifndef CDGP_ODE_HPP_
#define CDGP_ODE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdgp/tape.hpp"

namespace cdgp {

enum class LikelihoodKind { kGaussian, kPoisson };

/// Observation times with multivariate observations. NaN entries mark
/// unobserved values (whole columns for partially observed systems).
struct TimeSeriesDataset {
  Eigen::VectorXd times;                    // n
  Eigen::MatrixXd y;                        // n x s
  std::vector<LikelihoodKind> likelihood;   // per output dimension

  int n() const { return static_cast<int>(times.size()); }
  int dim() const { return static_cast<int>(y.cols()); }
  bool column_observed(int j) const { return !std::isnan(y(0, j)); }
};

/// An ODE drift in two callable forms: plain values for integration, and a
/// tape form used inside the constraint likelihood so gradients reach both
/// the interpolant and the parameters. The tape form receives the function
/// values f (n x s) on the evaluation grid and the parameters as 1x1 vars,
/// and returns one n x 1 column per state dimension.
struct OdeSystem {
  std::string name;
  int state_dim = 0;
  int param_dim = 0;
  std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& theta)>
      drift;
  std::function<std::vector<diff::Var>(diff::Tape&, const Eigen::VectorXd& t, diff::Var f,
                                       const std::vector<diff::Var>& theta)>
      drift_tape;
};

OdeSystem lotka_volterra();
OdeSystem fitzhugh_nagumo();
OdeSystem biopathways();
OdeSystem lorenz96(int state_dim);

/// Classical fixed-step RK4 from t_grid[0], with substeps of size <= step
/// chosen to land on every grid time exactly. Returns the state at each grid
/// time as rows. Throws on non-finite state, naming the failure time.
Eigen::MatrixXd integrate_rk4(const OdeSystem& system, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& x0, const Eigen::VectorXd& t_grid,
                              double step);

/// A named benchmark configuration: a system with its ground-truth
/// parameters, initial state, sampling times and noise level. Non-ODE count
/// scenarios set poisson_counts and use the rate curve below.
struct Scenario {
  std::string name;
  OdeSystem system;
  Eigen::VectorXd theta_true;
  Eigen::VectorXd x0;  // empty: drawn standard normal per fold (Lorenz96)
  Eigen::VectorXd times;
  double noise_std = 0.0;
  bool poisson_counts = false;
  double integrate_step = 1e-3;
  // rate(t) = exp(count_a + count_b * logistic(t - count_c)) for count data
  double count_a = 1.0, count_b = 2.5, count_c = 5.0;

  double t_min() const { return times.minCoeff(); }
  double t_max() const { return times.maxCoeff(); }
};

/// Scenario registry addressed by string name:
///   lotka-volterra/1, lotka-volterra/2, lotka-volterra/n<k>,
///   fhn/1, fhn/2, fhn/n<k>, biopathways/1, biopathways/2,
///   lorenz96/<s>, monotonic-counts/1.
/// Throws std::invalid_argument for unknown names.
Scenario find_scenario(const std::string& name);

/// Ground truth through integrate_rk4 at the scenario's times plus iid
/// Gaussian noise (or Poisson counts); deterministic given noise_seed.
TimeSeriesDataset generate_dataset(const Scenario& scenario, std::uint64_t noise_seed);

/// Noiseless trajectory of the scenario at arbitrary times.
Eigen::MatrixXd scenario_truth(const Scenario& scenario, const Eigen::VectorXd& times,
                               std::uint64_t fold_seed);

/// Unobserved-state index choices for partially observed runs.
std::vector<int> unobserved_every_third(int state_dim);
std::vector<int> unobserved_random_third(int state_dim, std::uint64_t seed);
/// Marks the given state columns as unobserved (NaN).
void mask_states(TimeSeriesDataset& data, const std::vector<int>& states);

void write_dataset_csv(const TimeSeriesDataset& data, const std::string& path);
TimeSeriesDataset read_dataset_csv(const std::string& path);

}  // namespace cdgp

#endif  // CDGP_ODE_HPP_
