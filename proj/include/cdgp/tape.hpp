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

#ifndef CDGP_TAPE_HPP_
#define CDGP_TAPE_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace cdgp::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; owns nothing. The value is a
/// dense real matrix (scalars are 1x1). Valid only while its tape is alive
/// and not cleared.
struct Var {
  int id = -1;
  Tape* tape = nullptr;

  const Eigen::MatrixXd& value() const;
  const Eigen::MatrixXd& grad() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  double scalar() const;  // value()(0,0); requires 1x1
};

/// Reverse-mode computation record over dense matrices. Ops append nodes;
/// backward() runs one sweep in reverse order, accumulating gradients of a
/// scalar root into every tracked node. A tape is confined to one thread.
/// Gradient shapes always equal value shapes, and a second backward() after
/// zero_grad() reproduces identical gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked leaf: gradients will be accumulated for it.
  Var input(Eigen::MatrixXd v);
  /// Untracked leaf: no gradient flows into it.
  Var constant(Eigen::MatrixXd v);
  Var constant(double c);

  /// Zeroes all gradients, seeds d(root)/d(root) = 1 and sweeps the record
  /// backwards. root must be 1x1.
  void backward(Var root);
  void zero_grad();

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  const Eigen::MatrixXd& grad(Var v) const;
  bool tracked(Var v) const { return nodes_[v.id].tracked; }

  std::size_t size() const { return nodes_.size(); }
  /// Drops all nodes, keeping allocated capacity for reuse.
  void clear() { nodes_.clear(); }

  // Low-level node plumbing used by the op implementations.
  Var emplace(Eigen::MatrixXd v, bool tracked);
  void set_backprop(Var v, std::function<void(Tape&)> fn);
  const Eigen::MatrixXd& node_value(int id) const { return nodes_[id].value; }
  const Eigen::MatrixXd& node_grad(int id) const { return nodes_[id].grad; }
  bool node_tracked(int id) const { return nodes_[id].tracked; }
  /// Gradient accumulator for a node, allocated (zeroed) on first use.
  Eigen::MatrixXd& grad_slot(int id);

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // allocated on first backward
    std::function<void(Tape&)> backprop;  // empty for leaves
    bool tracked = false;
    bool grad_ready = false;
  };

  std::vector<Node> nodes_;
};

// Primitive set. Binary elementwise ops require identical shapes; use
// broadcast() to expand a 1x1, 1xc or rx1 operand first. Shape mismatches
// throw std::invalid_argument naming the offending shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
Var matmul(Var a, Var b);
Var neg(Var a);
Var reciprocal(Var a);
Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var cos(Var a);
Var sin(Var a);
/// cos and sin of the same argument in one pass; each node's backward reuses
/// the sibling's stored value instead of re-evaluating trig.
struct CosSin {
  Var cos, sin;
};
CosSin cos_sin(Var a);
Var tanh(Var a);
Var lgamma(Var a);
/// log(1 + exp(x)), evaluated in the overflow-safe form.
Var softplus(Var a);
/// Full reduction to a 1x1 scalar.
Var sum(Var a);
/// Expands a 1x1, 1xc or rx1 matrix to rows x cols by replication.
Var broadcast(Var a, Eigen::Index rows, Eigen::Index cols);
/// Column-block concatenation [a, b]; rows must match.
Var hcat(Var a, Var b);
/// Multiplication by a fixed (non-differentiated) scalar.
Var scale(Var a, double c);
/// Addition of a fixed scalar to every entry.
Var shift(Var a, double c);
/// Column j as an r x 1 matrix (matmul with a constant selector).
Var col(Var a, Eigen::Index j);
/// Contiguous row block [start, start + count).
Var row_block(Var a, Eigen::Index start, Eigen::Index count);

// Sugar. The binary operators auto-broadcast a 1x1 operand against the
// other's shape; everything else must match exactly.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

/// digamma(x) for x > 0; derivative of lgamma.
double digamma(double x);

}  // namespace cdgp::diff

#endif  // CDGP_TAPE_HPP_
