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

#include "cdgp/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace cdgp::diff {

namespace {

std::string shape_str(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: requires x > 0, got " + std::to_string(x));
  double result = 0.0;
  while (x < 6.0) {  // recurrence up to the asymptotic region
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // ln x - 1/(2x) - sum_k B_{2k} / (2k x^{2k})
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

const Eigen::MatrixXd& Var::value() const { return tape->value(*this); }
const Eigen::MatrixXd& Var::grad() const { return tape->grad(*this); }
Eigen::Index Var::rows() const { return value().rows(); }
Eigen::Index Var::cols() const { return value().cols(); }

double Var::scalar() const {
  const Eigen::MatrixXd& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("Var::scalar: value is " + shape_str(v) + ", expected 1x1");
  }
  return v(0, 0);
}

Var Tape::emplace(Eigen::MatrixXd v, bool is_tracked) {
  Node node;
  node.value = std::move(v);
  node.tracked = is_tracked;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

void Tape::set_backprop(Var v, std::function<void(Tape&)> fn) {
  nodes_[v.id].backprop = std::move(fn);
}

Var Tape::input(Eigen::MatrixXd v) { return emplace(std::move(v), true); }

Var Tape::constant(Eigen::MatrixXd v) { return emplace(std::move(v), false); }

Var Tape::constant(double c) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = c;
  return constant(std::move(m));
}

Eigen::MatrixXd& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

const Eigen::MatrixXd& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.grad_ready) {
    throw std::logic_error("Tape::grad: no backward pass has run for this node");
  }
  return n.grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    if (n.grad_ready) n.grad.setZero();
  }
}

void Tape::backward(Var root) {
  const Eigen::MatrixXd& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw std::invalid_argument("Tape::backward: root is " + shape_str(rv) + ", expected 1x1");
  }
  // Zero-allocate every tracked gradient up front so dead-end branches read
  // zeros and repeated sweeps start clean.
  for (int i = 0; i <= root.id; ++i) {
    Node& n = nodes_[i];
    if (!n.tracked) continue;
    if (n.grad_ready) {
      n.grad.setZero();
    } else {
      n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
  }
  grad_slot(root.id)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.tracked && n.backprop) n.backprop(*this);
  }
}

namespace {

// Shared scaffolding for binary ops: result is tracked if either input is.
Var binary_node(Var a, Var b, Eigen::MatrixXd out) {
  Tape& t = *a.tape;
  return t.emplace(std::move(out), t.node_tracked(a.id) || t.node_tracked(b.id));
}

// Elementwise unary op: forward maps the value; backprop receives
// (upstream grad, input value, output value) and returns the contribution.
template <typename Fwd, typename Bwd>
Var unary_op(Var a, Fwd&& fwd, Bwd&& bwd) {
  Tape& t = *a.tape;
  Var y = t.emplace(fwd(a.value()), t.node_tracked(a.id));
  const int ia = a.id, iy = y.id;
  if (t.node_tracked(ia)) {
    t.set_backprop(y, [ia, iy, bwd](Tape& tp) {
      tp.grad_slot(ia) += bwd(tp.node_grad(iy), tp.node_value(ia), tp.node_value(iy));
    });
  }
  return y;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  Var y = binary_node(a, b, a.value() + b.value());
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      if (tp.node_tracked(ia)) tp.grad_slot(ia) += g;
      if (tp.node_tracked(ib)) tp.grad_slot(ib) += g;
    });
  }
  return y;
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  Var y = binary_node(a, b, a.value() - b.value());
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      if (tp.node_tracked(ia)) tp.grad_slot(ia) += g;
      if (tp.node_tracked(ib)) tp.grad_slot(ib) -= g;
    });
  }
  return y;
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  Var y = binary_node(a, b, a.value().cwiseProduct(b.value()));
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      if (tp.node_tracked(ia)) tp.grad_slot(ia) += g.cwiseProduct(tp.node_value(ib));
      if (tp.node_tracked(ib)) tp.grad_slot(ib) += g.cwiseProduct(tp.node_value(ia));
    });
  }
  return y;
}

Var div(Var a, Var b) {
  require_same_shape("div", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  Var y = binary_node(a, b, a.value().cwiseQuotient(b.value()));
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      const Eigen::MatrixXd& bv = tp.node_value(ib);
      if (tp.node_tracked(ia)) tp.grad_slot(ia) += g.cwiseQuotient(bv);
      if (tp.node_tracked(ib)) {
        tp.grad_slot(ib) -= g.cwiseProduct(tp.node_value(iy)).cwiseQuotient(bv);
      }
    });
  }
  return y;
}

Var matmul(Var a, Var b) {
  const Eigen::MatrixXd& av = a.value();
  const Eigen::MatrixXd& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(av) + " * " +
                                shape_str(bv));
  }
  const int ia = a.id, ib = b.id;
  Var y = binary_node(a, b, av * bv);
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      if (tp.node_tracked(ia)) {
        tp.grad_slot(ia).noalias() += g * tp.node_value(ib).transpose();
      }
      if (tp.node_tracked(ib)) {
        tp.grad_slot(ib).noalias() += tp.node_value(ia).transpose() * g;
      }
    });
  }
  return y;
}

Var neg(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(-v); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(-g);
      });
}

Var reciprocal(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.cwiseInverse()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd& y) {
        return Eigen::MatrixXd(-g.cwiseProduct(y).cwiseProduct(y));
      });
}

Var square(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().square()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(2.0 * g.cwiseProduct(x));
      });
}

Var sqrt(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().sqrt()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd& y) {
        return Eigen::MatrixXd(0.5 * g.cwiseQuotient(y));
      });
}

Var exp(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().exp()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd& y) {
        return Eigen::MatrixXd(g.cwiseProduct(y));
      });
}

Var log(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().log()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(g.cwiseQuotient(x));
      });
}

Var cos(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().cos()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(-g.cwiseProduct(x.array().sin().matrix()));
      });
}

Var sin(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().sin()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(g.cwiseProduct(x.array().cos().matrix()));
      });
}

CosSin cos_sin(Var a) {
  Tape& t = *a.tape;
  const Eigen::MatrixXd& x = a.value();
  Eigen::MatrixXd cv(x.rows(), x.cols());
  Eigen::MatrixXd sv(x.rows(), x.cols());
  const double* src = x.data();
  double* cd = cv.data();
  double* sd = sv.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
#if defined(__GNUC__) && defined(__linux__)
    ::sincos(src[i], &sd[i], &cd[i]);
#else
    sd[i] = std::sin(src[i]);
    cd[i] = std::cos(src[i]);
#endif
  }
  const bool tracked = t.node_tracked(a.id);
  Var c = t.emplace(std::move(cv), tracked);
  Var s = t.emplace(std::move(sv), tracked);
  const int ia = a.id, ic = c.id, is = s.id;
  if (tracked) {
    t.set_backprop(c, [ia, ic, is](Tape& tp) {
      tp.grad_slot(ia) -= tp.node_grad(ic).cwiseProduct(tp.node_value(is));
    });
    t.set_backprop(s, [ia, ic, is](Tape& tp) {
      tp.grad_slot(ia) += tp.node_grad(is).cwiseProduct(tp.node_value(ic));
    });
  }
  return CosSin{c, s};
}

Var tanh(Var a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(v.array().tanh()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd& y) {
        return Eigen::MatrixXd(g.cwiseProduct((1.0 - y.array().square()).matrix()));
      });
}

Var lgamma(Var a) {
  return unary_op(
      a,
      [](const Eigen::MatrixXd& v) {
        return Eigen::MatrixXd(v.unaryExpr([](double x) { return std::lgamma(x); }));
      },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(g.cwiseProduct(x.unaryExpr([](double v) { return digamma(v); })));
      });
}

Var softplus(Var a) {
  return unary_op(
      a,
      [](const Eigen::MatrixXd& v) {
        return Eigen::MatrixXd(v.unaryExpr([](double x) { return softplus_scalar(x); }));
      },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(g.cwiseProduct(x.unaryExpr([](double v) { return sigmoid(v); })));
      });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = a.value().sum();
  Var y = t.emplace(std::move(out), t.node_tracked(a.id));
  const int ia = a.id, iy = y.id;
  if (t.node_tracked(ia)) {
    t.set_backprop(y, [ia, iy](Tape& tp) {
      tp.grad_slot(ia).array() += tp.node_grad(iy)(0, 0);
    });
  }
  return y;
}

Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = *a.tape;
  const Eigen::MatrixXd& av = a.value();
  const Eigen::Index ar = av.rows(), ac = av.cols();
  const bool from_scalar = (ar == 1 && ac == 1);
  const bool from_row = !from_scalar && (ar == 1 && ac == cols);
  const bool from_col = !from_scalar && (ac == 1 && ar == rows);
  if (!from_scalar && !from_row && !from_col) {
    throw std::invalid_argument("broadcast: cannot expand " + shape_str(av) + " to " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  Eigen::MatrixXd out;
  if (from_scalar) {
    out = Eigen::MatrixXd::Constant(rows, cols, av(0, 0));
  } else if (from_row) {
    out = av.replicate(rows, 1);
  } else {
    out = av.replicate(1, cols);
  }
  Var y = t.emplace(std::move(out), t.node_tracked(a.id));
  const int ia = a.id, iy = y.id;
  if (t.node_tracked(ia)) {
    t.set_backprop(y, [ia, iy, from_scalar, from_row](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      Eigen::MatrixXd& ga = tp.grad_slot(ia);
      if (from_scalar) {
        ga(0, 0) += g.sum();
      } else if (from_row) {
        ga += g.colwise().sum();
      } else {
        ga += g.rowwise().sum();
      }
    });
  }
  return y;
}

Var hcat(Var a, Var b) {
  const Eigen::MatrixXd& av = a.value();
  const Eigen::MatrixXd& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw std::invalid_argument("hcat: row mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  Eigen::MatrixXd out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  const int ia = a.id, ib = b.id;
  const Eigen::Index na = av.cols(), nb = bv.cols();
  Var y = binary_node(a, b, std::move(out));
  const int iy = y.id;
  if (y.tape->node_tracked(iy)) {
    y.tape->set_backprop(y, [ia, ib, iy, na, nb](Tape& tp) {
      const Eigen::MatrixXd& g = tp.node_grad(iy);
      if (tp.node_tracked(ia)) tp.grad_slot(ia) += g.leftCols(na);
      if (tp.node_tracked(ib)) tp.grad_slot(ib) += g.rightCols(nb);
    });
  }
  return y;
}

Var scale(Var a, double c) {
  return unary_op(
      a, [c](const Eigen::MatrixXd& v) { return Eigen::MatrixXd(c * v); },
      [c](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd&) {
        return Eigen::MatrixXd(c * g);
      });
}

Var shift(Var a, double c) {
  return unary_op(
      a, [c](const Eigen::MatrixXd& v) { return Eigen::MatrixXd((v.array() + c).matrix()); },
      [](const Eigen::MatrixXd& g, const Eigen::MatrixXd&, const Eigen::MatrixXd&) {
        return g;
      });
}

Var row_block(Var a, Eigen::Index start, Eigen::Index count) {
  const Eigen::MatrixXd& av = a.value();
  if (start < 0 || count < 1 || start + count > av.rows()) {
    throw std::invalid_argument("row_block: rows [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") out of range for " +
                                shape_str(av));
  }
  Tape& t = *a.tape;
  Var y = t.emplace(av.middleRows(start, count), t.node_tracked(a.id));
  const int ia = a.id, iy = y.id;
  if (t.node_tracked(ia)) {
    t.set_backprop(y, [ia, iy, start, count](Tape& tp) {
      tp.grad_slot(ia).middleRows(start, count) += tp.node_grad(iy);
    });
  }
  return y;
}

Var col(Var a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) {
    throw std::invalid_argument("col: index " + std::to_string(j) + " out of range for " +
                                shape_str(a.value()));
  }
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(a.cols(), 1);
  selector(j, 0) = 1.0;
  return matmul(a, a.tape->constant(std::move(selector)));
}

namespace {

// Auto-broadcast a 1x1 operand against the other's shape for operator sugar.
std::pair<Var, Var> align(Var a, Var b) {
  const bool a1 = a.rows() == 1 && a.cols() == 1;
  const bool b1 = b.rows() == 1 && b.cols() == 1;
  if (a1 && !b1) a = broadcast(a, b.rows(), b.cols());
  if (b1 && !a1) b = broadcast(b, a.rows(), a.cols());
  return {a, b};
}

}  // namespace

Var operator+(Var a, Var b) { auto [x, y] = align(a, b); return add(x, y); }
Var operator-(Var a, Var b) { auto [x, y] = align(a, b); return sub(x, y); }
Var operator*(Var a, Var b) { auto [x, y] = align(a, b); return mul(x, y); }
Var operator/(Var a, Var b) { auto [x, y] = align(a, b); return div(x, y); }
Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double c) { return shift(a, c); }
Var operator+(double c, Var a) { return shift(a, c); }
Var operator-(Var a, double c) { return shift(a, -c); }
Var operator-(double c, Var a) { return shift(neg(a), c); }
Var operator*(Var a, double c) { return scale(a, c); }
Var operator*(double c, Var a) { return scale(a, c); }
Var operator/(Var a, double c) { return scale(a, 1.0 / c); }

}  // namespace cdgp::diff
