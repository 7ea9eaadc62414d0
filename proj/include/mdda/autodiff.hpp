/*
 * Copyright 2026 The mdda-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdda::ad {

/// Dense row-major matrix. Every value on a tape is rank <= 2; scalars are 1x1.
template <typename Scalar>
using TensorT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tensor = TensorT<double>;

using NodeId = std::uint32_t;

/// Raised when an operation would produce NaN/Inf or leaves its domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  MatMul,
  Transpose,
  Relu,
  LeakyRelu,
  SlopeMask,  // 1 where x > 0, slope elsewhere; zero derivative
  Tanh,
  Exp,
  Log,
  Square,
  Sqrt,
  Sum,
};

const char* op_name(OpKind op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the node exists.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

struct Node {
  OpKind op = OpKind::Leaf;
  std::array<NodeId, 2> inputs{};
  std::uint8_t arity = 0;
  double param = 0.0;
  Tensor value;
};

/// Append-only computation record. Nodes are stored in a deque so references
/// to node values stay valid while new nodes are appended.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. Parameters, inputs and constants are all leaves; which of
  /// them receive gradients is decided by the wrt list given to backward().
  Var leaf(Tensor value);
  Var scalar(double v);
  Var ones(Eigen::Index rows, Eigen::Index cols);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  Var var(NodeId id);

  /// Drops every node with id >= n. Handles to those nodes become dangling.
  void truncate(std::size_t n);

  Var record(OpKind op, std::initializer_list<Var> inputs, Tensor value, double param = 0.0);

 private:
  std::deque<Node> nodes_;
};

// Elementwise ops accept equal shapes or a 1x1 operand on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
/// Inputs exactly at zero take the negative-side slope.
Var leaky_relu(Var a, double slope);
Var slope_mask(Var a, double slope);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Sum of all elements, 1x1.
Var sum(Var a);
Var mean(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double b);
Var operator-(Var a, double b);
Var operator*(Var a, double b);
Var operator-(double a, Var b);
inline Var operator*(double a, Var b) { return b * a; }
inline Var operator+(double a, Var b) { return b + a; }

/// Mean over rows of -log softmax(logits)[label], built from the primitive
/// ops above so it stays differentiable. Rows are shifted by their max.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Row-wise softmax on plain values (no tape).
Tensor softmax(const Tensor& logits);

/// Gradients of a scalar output, keyed by the id of each requested node.
class Grads {
 public:
  bool contains(NodeId id) const { return values_.count(id) != 0; }
  const Tensor& operator[](Var v) const { return at(v.id()); }
  const Tensor& at(NodeId id) const;
  /// Gradient node on the tape; only present when backward ran with record=true.
  Var node(Var v) const;
  bool recorded() const { return !nodes_.empty(); }

 private:
  friend Grads backward(Tape&, Var, std::span<const Var>, bool);
  std::unordered_map<NodeId, Tensor> values_;
  std::unordered_map<NodeId, Var> nodes_;
};

/// Reverse-mode gradient of `output` (1x1) with respect to `wrt`.
///
/// The vector-Jacobian product of every op is itself written with tape ops.
/// With record=true those nodes stay on the tape, so the returned gradients
/// can be differentiated again. With record=false the tape is rolled back to
/// its size on entry. Nodes in `wrt` that `output` does not depend on get a
/// zero gradient.
Grads backward(Tape& tape, Var output, std::span<const Var> wrt, bool record = false);
inline Grads backward(Tape& tape, Var output, std::initializer_list<Var> wrt, bool record = false) {
  return backward(tape, output, std::span<const Var>(wrt.begin(), wrt.size()), record);
}

}  // namespace mdda::ad
