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

#include "cdgp/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cdgp {

namespace {

std::string format_matrix(const Eigen::MatrixXd& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols());
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out += " ";
      out += buf;
    }
  }
  return out;
}

Eigen::MatrixXd parse_matrix(const std::string& text, const std::string& key) {
  std::istringstream ss(text);
  Eigen::Index rows = 0, cols = 0;
  if (!(ss >> rows >> cols)) throw std::runtime_error("model file: bad matrix header for " + key);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(ss >> m(i, j))) throw std::runtime_error("model file: truncated matrix " + key);
    }
  }
  return m;
}

class KeyValueFile {
 public:
  explicit KeyValueFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      map_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  const std::string& get(const std::string& key) const {
    const auto it = map_.find(key);
    if (it == map_.end()) throw std::runtime_error("model file: missing key " + key);
    return it->second;
  }
  bool has(const std::string& key) const { return map_.count(key) > 0; }
  Eigen::MatrixXd matrix(const std::string& key) const { return parse_matrix(get(key), key); }
  double number(const std::string& key) const { return std::stod(get(key)); }
  long integer(const std::string& key) const { return std::stol(get(key)); }

 private:
  std::map<std::string, std::string> map_;
};

std::string family_name(KernelFamily f) {
  return f == KernelFamily::kRbf ? "rbf" : "matern";
}

KernelFamily family_from(const std::string& s) {
  if (s == "rbf") return KernelFamily::kRbf;
  if (s == "matern") return KernelFamily::kMatern;
  throw std::runtime_error("model file: unknown kernel family " + s);
}

std::string noise_name(ConstraintNoise n) {
  switch (n) {
    case ConstraintNoise::kGaussian: return "gaussian";
    case ConstraintNoise::kStudentT: return "student-t";
    case ConstraintNoise::kLogistic: return "logistic";
  }
  return "gaussian";
}

ConstraintNoise noise_from(const std::string& s) {
  if (s == "gaussian") return ConstraintNoise::kGaussian;
  if (s == "student-t") return ConstraintNoise::kStudentT;
  if (s == "logistic") return ConstraintNoise::kLogistic;
  throw std::runtime_error("model file: unknown constraint noise " + s);
}

OdeSystem system_by_name(const std::string& name, int state_dim) {
  if (name == "lotka-volterra") return lotka_volterra();
  if (name == "fhn") return fitzhugh_nagumo();
  if (name == "biopathways") return biopathways();
  if (name == "lorenz96") return lorenz96(state_dim);
  throw std::runtime_error("model file: unknown ODE system " + name);
}

}  // namespace

void save_fit(const FitResult& fit, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  out << "# cdgp model\n";
  out << "format=1\n";
  out << "depth=" << fit.model.depth() << "\n";
  for (int l = 0; l < fit.model.depth(); ++l) {
    const Layer& layer = fit.model.layers[l];
    const std::string p = "layer." + std::to_string(l) + ".";
    out << p << "family=" << family_name(layer.kernel.family) << "\n";
    out << p << "nu=" << layer.kernel.matern_nu << "\n";
    out << p << "n_rf=" << layer.kernel.n_rf << "\n";
    out << p << "d_in=" << layer.d_in << "\n";
    out << p << "d_out=" << layer.d_out << "\n";
    out << p << "spectral_seed=" << layer.draws.seed << "\n";
    out << p << "log_lengthscale=" << format_matrix(layer.kernel.log_lengthscale) << "\n";
    out << p << "log_amplitude=" << format_matrix(layer.kernel.log_amplitude) << "\n";
    out << p << "weight_mean=" << format_matrix(layer.weight_mean) << "\n";
    out << p << "weight_log_std=" << format_matrix(layer.weight_log_std) << "\n";
  }
  out << "log_noise_std=" << format_matrix(fit.model.log_noise_std) << "\n";

  out << "theta.present=" << (fit.has_theta ? 1 : 0) << "\n";
  if (fit.has_theta) {
    std::string transforms;
    for (ThetaTransform t : fit.theta.transforms) {
      if (!transforms.empty()) transforms += ",";
      transforms += t == ThetaTransform::kLog ? "log" : "identity";
    }
    out << "theta.transforms=" << transforms << "\n";
    out << "theta.prior_mean=" << fit.theta.prior_mean << "\n";
    out << "theta.prior_std=" << fit.theta.prior_std << "\n";
    out << "theta.mu=" << format_matrix(fit.theta.mu) << "\n";
    out << "theta.l_strict=" << format_matrix(fit.theta.l_strict) << "\n";
    out << "theta.log_diag=" << format_matrix(fit.theta.log_diag) << "\n";
  }

  const ConstraintSpec& c = fit.constraint;
  std::string kind = "none";
  if (c.kind == ConstraintKind::kEquality) kind = "equality";
  if (c.kind == ConstraintKind::kInequality) kind = "inequality";
  out << "constraint.kind=" << kind << "\n";
  if (c.active()) {
    out << "constraint.noise=" << noise_name(c.noise) << "\n";
    out << "constraint.nu=" << c.student_nu << "\n";
    out << "constraint.psi_d=" << c.psi_d << "\n";
    std::string dims;
    for (int d : c.dims) {
      if (!dims.empty()) dims += ",";
      dims += std::to_string(d);
    }
    out << "constraint.dims=" << dims << "\n";
    out << "constraint.grid=" << format_matrix(Eigen::MatrixXd(c.grid)) << "\n";
    if (c.kind == ConstraintKind::kEquality) {
      out << "constraint.log_scale=" << format_matrix(c.log_scale) << "\n";
      out << "constraint.system=" << c.system.name << "\n";
      out << "constraint.system_dim=" << c.system.state_dim << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for model file " + path);
}

FitResult load_fit(const std::string& path) {
  KeyValueFile kv(path);
  FitResult fit;
  const int depth = static_cast<int>(kv.integer("depth"));
  for (int l = 0; l < depth; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    Layer layer;
    layer.kernel.family = family_from(kv.get(p + "family"));
    layer.kernel.matern_nu = kv.number(p + "nu");
    layer.kernel.n_rf = static_cast<int>(kv.integer(p + "n_rf"));
    layer.d_in = static_cast<int>(kv.integer(p + "d_in"));
    layer.d_out = static_cast<int>(kv.integer(p + "d_out"));
    layer.kernel.log_lengthscale = kv.matrix(p + "log_lengthscale");
    layer.kernel.log_amplitude = kv.matrix(p + "log_amplitude");
    layer.weight_mean = kv.matrix(p + "weight_mean");
    layer.weight_log_std = kv.matrix(p + "weight_log_std");
    layer.draws = sample_spectral(layer.kernel, layer.d_in,
                                  static_cast<std::uint64_t>(kv.integer(p + "spectral_seed")));
    fit.model.layers.push_back(std::move(layer));
  }
  fit.model.log_noise_std = kv.matrix("log_noise_std");

  if (kv.integer("theta.present") == 1) {
    fit.has_theta = true;
    std::stringstream ss(kv.get("theta.transforms"));
    std::string token;
    while (std::getline(ss, token, ',')) {
      fit.theta.transforms.push_back(token == "log" ? ThetaTransform::kLog
                                                    : ThetaTransform::kIdentity);
    }
    fit.theta.prior_mean = kv.number("theta.prior_mean");
    fit.theta.prior_std = kv.number("theta.prior_std");
    fit.theta.mu = kv.matrix("theta.mu");
    fit.theta.l_strict = kv.matrix("theta.l_strict");
    fit.theta.log_diag = kv.matrix("theta.log_diag");
  }

  const std::string kind = kv.get("constraint.kind");
  if (kind != "none") {
    fit.constraint.kind =
        kind == "equality" ? ConstraintKind::kEquality : ConstraintKind::kInequality;
    fit.constraint.noise = noise_from(kv.get("constraint.noise"));
    fit.constraint.student_nu = kv.number("constraint.nu");
    fit.constraint.psi_d = kv.number("constraint.psi_d");
    std::stringstream ss(kv.get("constraint.dims"));
    std::string token;
    while (std::getline(ss, token, ',')) fit.constraint.dims.push_back(std::stoi(token));
    fit.constraint.grid = Eigen::VectorXd(kv.matrix("constraint.grid"));
    if (fit.constraint.kind == ConstraintKind::kEquality) {
      fit.constraint.log_scale = kv.matrix("constraint.log_scale");
      fit.constraint.system = system_by_name(kv.get("constraint.system"),
                                             static_cast<int>(kv.integer("constraint.system_dim")));
    }
  }
  return fit;
}

}  // namespace cdgp
