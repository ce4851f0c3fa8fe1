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

#include "cdgp/dgp.hpp"

#include <cmath>
#include <stdexcept>

namespace cdgp {

using diff::Var;

DgpModel build_dgp(const Architecture& arch, int input_dim, int output_dim, double lambda0,
                   double alpha0, double sigma0, std::uint64_t spectral_seed,
                   double weight_log_std0) {
  if (arch.depth < 1) throw std::invalid_argument("build_dgp: depth must be >= 1");
  if (arch.hidden_width < 1) throw std::invalid_argument("build_dgp: hidden width must be >= 1");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("build_dgp: sigma0 must be > 0");
  DgpModel model;
  for (int l = 0; l < arch.depth; ++l) {
    Layer layer;
    layer.d_in = (l == 0) ? input_dim : arch.hidden_width;
    layer.d_out = (l == arch.depth - 1) ? output_dim : arch.hidden_width;
    layer.kernel.family = arch.family;
    layer.kernel.matern_nu = arch.matern_nu;
    layer.kernel.n_rf = arch.n_rf;
    layer.kernel.log_lengthscale = Eigen::MatrixXd::Constant(1, layer.d_in, lambda0);
    layer.kernel.log_amplitude = Eigen::MatrixXd::Constant(1, 1, alpha0);
    layer.draws = sample_spectral(layer.kernel, layer.d_in,
                                  spectral_seed + static_cast<std::uint64_t>(l));
    layer.weight_mean = Eigen::MatrixXd::Zero(layer.kernel.feature_dim(), layer.d_out);
    layer.weight_log_std =
        Eigen::MatrixXd::Constant(layer.kernel.feature_dim(), layer.d_out, weight_log_std0);
    model.layers.push_back(std::move(layer));
  }
  model.log_noise_std = Eigen::MatrixXd::Constant(1, output_dim, std::log(sigma0));
  return model;
}

DgpVars bind_dgp(diff::Tape& tape, const DgpModel& model, bool tracked) {
  DgpVars vars;
  auto put = [&](const Eigen::MatrixXd& m) {
    return tracked ? tape.input(m) : tape.constant(m);
  };
  for (const Layer& layer : model.layers) {
    LayerVars lv;
    lv.weight_mean = put(layer.weight_mean);
    lv.weight_log_std = put(layer.weight_log_std);
    lv.log_ell = put(layer.kernel.log_lengthscale);
    lv.log_amp = put(layer.kernel.log_amplitude);
    vars.layers.push_back(lv);
  }
  if (model.log_noise_std.size() > 0) {
    vars.log_noise_std = put(model.log_noise_std);
    vars.has_noise = true;
  }
  return vars;
}

std::vector<Var> sample_weights(diff::Tape& tape, const DgpModel& model, const DgpVars& vars,
                                Rng& rng) {
  std::vector<Var> weights;
  weights.reserve(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    Var eps = tape.constant(randn(rng, layer.weight_mean.rows(), layer.weight_mean.cols()));
    Var w = diff::add(vars.layers[l].weight_mean,
                      diff::mul(diff::exp(vars.layers[l].weight_log_std), eps));
    weights.push_back(w);
  }
  return weights;
}

namespace {

// Feature pieces of one layer that do not involve the sampled weights.
SharedFeatures layer_features(diff::Tape& tape, const Layer& layer, const LayerVars& lv,
                              Var u, Var du) {
  const Eigen::Index n = u.rows();
  const Eigen::Index d_in = layer.d_in;
  Var inv_ell_full = diff::broadcast(diff::exp(diff::neg(lv.log_ell)), n, d_in);
  Var eps_t = tape.constant(Eigen::MatrixXd(layer.draws.epsilon.transpose()));
  Var z = diff::matmul(diff::mul(u, inv_ell_full), eps_t);
  Var dz = diff::matmul(diff::mul(du, inv_ell_full), eps_t);
  const diff::CosSin cs = diff::cos_sin(z);
  Var amp = diff::scale(diff::exp(lv.log_amp),
                        1.0 / std::sqrt(static_cast<double>(layer.kernel.n_rf)));
  SharedFeatures out;
  out.ready = true;
  out.cos_z = cs.cos;
  out.sin_z = cs.sin;
  out.d_cos = diff::mul(diff::neg(cs.sin), dz);  // d/dt of the cos block, pre-amplitude
  out.d_sin = diff::mul(cs.cos, dz);
  out.amp_full = diff::broadcast(amp, n, layer.d_out);
  return out;
}

}  // namespace

PathVars forward_with_derivative(diff::Tape& tape, const DgpModel& model, const DgpVars& vars,
                                 const std::vector<Var>& weights, const Eigen::VectorXd& t,
                                 SharedFeatures* shared) {
  if (weights.size() != model.layers.size()) {
    throw std::invalid_argument("forward_with_derivative: weight count != layer count");
  }
  const Eigen::Index n = t.size();
  Var u = tape.constant(Eigen::MatrixXd(t));
  Var du = tape.constant(Eigen::MatrixXd::Ones(n, 1));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    if (u.cols() != layer.d_in) {
      throw std::invalid_argument("forward_with_derivative: layer " + std::to_string(l) +
                                  " expects d_in " + std::to_string(layer.d_in) + ", got " +
                                  std::to_string(u.cols()));
    }
    // Same map as features_with_input_derivative, with the weight product
    // fused per trigonometric block: since Phi = s [cos Z, sin Z], Phi W
    // equals s (cos(Z) W_top + sin(Z) W_bottom), which never materializes
    // the n x 2*n_rf feature matrix.
    SharedFeatures local;
    const SharedFeatures* feat;
    if (l == 0 && shared != nullptr) {
      if (!shared->ready) *shared = layer_features(tape, layer, vars.layers[l], u, du);
      feat = shared;
    } else {
      local = layer_features(tape, layer, vars.layers[l], u, du);
      feat = &local;
    }
    const int n_rf = layer.kernel.n_rf;
    Var w_cos = diff::row_block(weights[l], 0, n_rf);
    Var w_sin = diff::row_block(weights[l], n_rf, n_rf);
    u = diff::mul(feat->amp_full, diff::add(diff::matmul(feat->cos_z, w_cos),
                                            diff::matmul(feat->sin_z, w_sin)));
    du = diff::mul(feat->amp_full, diff::add(diff::matmul(feat->d_cos, w_cos),
                                             diff::matmul(feat->d_sin, w_sin)));
  }
  return PathVars{u, du};
}

Var kl_weights(diff::Tape& tape, const DgpVars& vars) {
  Var total = tape.constant(0.0);
  for (const LayerVars& lv : vars.layers) {
    Var two_log_s = diff::scale(lv.weight_log_std, 2.0);
    Var terms = diff::sub(diff::add(diff::square(lv.weight_mean), diff::exp(two_log_s)),
                          diff::shift(two_log_s, 1.0));
    total = diff::add(total, diff::scale(diff::sum(terms), 0.5));
  }
  return total;
}

double kl_weights_value(const DgpModel& model) {
  diff::Tape tape;
  DgpVars vars = bind_dgp(tape, model, false);
  return kl_weights(tape, vars).scalar();
}

PathSample sample_path(const DgpModel& model, const Eigen::VectorXd& t, Rng& rng) {
  diff::Tape tape;
  DgpVars vars = bind_dgp(tape, model, false);
  std::vector<Var> weights = sample_weights(tape, model, vars, rng);
  PathVars path = forward_with_derivative(tape, model, vars, weights, t);
  return PathSample{path.f.value(), path.df_dt.value()};
}

}  // namespace cdgp
