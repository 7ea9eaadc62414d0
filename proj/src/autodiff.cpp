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

#include "mdda/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace mdda::ad {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("autodiff: invalid variable");
  if (a.tape() != b.tape()) throw std::invalid_argument("autodiff: operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: invalid variable");
  return *a.tape();
}

// Applies f elementwise after broadcasting a 1x1 operand.
template <typename F>
Tensor broadcast_apply(const char* name, const Tensor& a, const Tensor& b, F f) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return f(a.array(), b.array()).matrix();
  if (is_scalar(a)) {
    Tensor full = Tensor::Constant(b.rows(), b.cols(), a(0, 0));
    return f(full.array(), b.array()).matrix();
  }
  if (is_scalar(b)) {
    Tensor full = Tensor::Constant(a.rows(), a.cols(), b(0, 0));
    return f(a.array(), full.array()).matrix();
  }
  throw ShapeError(std::string("autodiff: ") + name + " shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Var reduce_to(Var g, const Tensor& target) {
  if (is_scalar(target) && !is_scalar(g.value())) return sum(g);
  return g;
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Relu: return "relu";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::SlopeMask: return "slope_mask";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Sum: return "sum";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!valid()) throw std::invalid_argument("autodiff: invalid variable");
  return tape_->node(id_).value;
}

double Var::item() const {
  const Tensor& v = value();
  if (!is_scalar(v)) throw ShapeError("autodiff: item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::leaf(Tensor value) {
  if (value.size() == 0) throw ShapeError("autodiff: empty tensor");
  if (!value.allFinite()) throw NumericError("autodiff: non-finite leaf value");
  Node n;
  n.op = OpKind::Leaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::scalar(double v) { return leaf(Tensor::Constant(1, 1, v)); }

Var Tape::ones(Eigen::Index rows, Eigen::Index cols) { return leaf(Tensor::Ones(rows, cols)); }

Var Tape::var(NodeId id) {
  if (id >= nodes_.size()) throw std::out_of_range("autodiff: node id out of range");
  return Var(this, id);
}

void Tape::truncate(std::size_t n) {
  while (nodes_.size() > n) nodes_.pop_back();
}

Var Tape::record(OpKind op, std::initializer_list<Var> inputs, Tensor value, double param) {
  if (!value.allFinite()) throw NumericError(std::string("autodiff: ") + op_name(op) + " produced a non-finite value");
  Node n;
  n.op = op;
  n.param = param;
  n.arity = static_cast<std::uint8_t>(inputs.size());
  std::size_t k = 0;
  for (Var v : inputs) {
    if (v.tape() != this) throw std::invalid_argument("autodiff: input from another tape");
    n.inputs[k++] = v.id();
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(OpKind::Add, {a, b},
                  broadcast_apply("add", a.value(), b.value(), [](const auto& x, const auto& y) { return x + y; }));
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(OpKind::Sub, {a, b},
                  broadcast_apply("sub", a.value(), b.value(), [](const auto& x, const auto& y) { return x - y; }));
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(OpKind::Mul, {a, b},
                  broadcast_apply("mul", a.value(), b.value(), [](const auto& x, const auto& y) { return x * y; }));
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if ((b.value().array() == 0.0).any()) throw NumericError("autodiff: division by zero");
  return t.record(OpKind::Div, {a, b},
                  broadcast_apply("div", a.value(), b.value(), [](const auto& x, const auto& y) { return x / y; }));
}

Var neg(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Neg, {a}, -a.value());
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows())
    throw ShapeError("autodiff: matmul inner dimensions disagree " + shape_str(x) + " * " + shape_str(y));
  Tensor out = x * y;
  return t.record(OpKind::MatMul, {a, b}, std::move(out));
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Transpose, {a}, a.value().transpose());
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Relu, {a}, a.value().cwiseMax(0.0));
}

Var leaky_relu(Var a, double slope) {
  Tape& t = tape_of(a);
  Tensor out = (a.value().array() > 0.0).select(a.value().array(), slope * a.value().array()).matrix();
  return t.record(OpKind::LeakyRelu, {a}, std::move(out), slope);
}

Var slope_mask(Var a, double slope) {
  Tape& t = tape_of(a);
  Tensor out = (a.value().array() > 0.0).select(Tensor::Ones(a.rows(), a.cols()).array(), slope).matrix();
  return t.record(OpKind::SlopeMask, {a}, std::move(out), slope);
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Tanh, {a}, a.value().array().tanh().matrix());
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value().array().exp().matrix();
  if (!out.allFinite()) throw NumericError("autodiff: exp overflow");
  return t.record(OpKind::Exp, {a}, std::move(out));
}

Var log(Var a) {
  Tape& t = tape_of(a);
  if ((a.value().array() <= 0.0).any()) throw NumericError("autodiff: log of non-positive value");
  return t.record(OpKind::Log, {a}, a.value().array().log().matrix());
}

Var square(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Square, {a}, a.value().array().square().matrix());
}

Var sqrt(Var a) {
  Tape& t = tape_of(a);
  if ((a.value().array() < 0.0).any()) throw NumericError("autodiff: sqrt of negative value");
  return t.record(OpKind::Sqrt, {a}, a.value().array().sqrt().matrix());
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.record(OpKind::Sum, {a}, Tensor::Constant(1, 1, a.value().sum()));
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return sum(a) * (1.0 / n);
}

Var operator+(Var a, double b) { return add(a, tape_of(a).scalar(b)); }
Var operator-(Var a, double b) { return sub(a, tape_of(a).scalar(b)); }
Var operator*(Var a, double b) { return mul(a, tape_of(a).scalar(b)); }
Var operator-(double a, Var b) { return sub(tape_of(b).scalar(a), b); }

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  const Eigen::Index batch = z.rows();
  const Eigen::Index classes = z.cols();
  if (batch < 1) throw ShapeError("autodiff: cross-entropy needs a non-empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw ShapeError("autodiff: cross-entropy label count does not match batch");

  Tensor onehot = Tensor::Zero(batch, classes);
  for (Eigen::Index r = 0; r < batch; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= classes)
      throw std::out_of_range("autodiff: label " + std::to_string(y) + " out of range [0, " +
                              std::to_string(classes) + ")");
    onehot(r, y) = 1.0;
  }
  // The shift is a constant: log-sum-exp is invariant to it, so gradients are unaffected.
  Tensor shift = z.rowwise().maxCoeff().replicate(1, classes);

  Var shifted = logits - t.leaf(std::move(shift));
  Var ones_col = t.ones(classes, 1);
  Var lse = log(matmul(exp(shifted), ones_col));
  Var picked = matmul(shifted * t.leaf(std::move(onehot)), ones_col);
  return mean(lse - picked);
}

Tensor softmax(const Tensor& logits) {
  Tensor shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Tensor e = shifted.array().exp().matrix();
  Eigen::VectorXd norm = e.rowwise().sum();
  for (Eigen::Index r = 0; r < e.rows(); ++r) e.row(r) /= norm(r);
  return e;
}

const Tensor& Grads::at(NodeId id) const {
  auto it = values_.find(id);
  if (it == values_.end()) throw std::out_of_range("autodiff: no gradient for node " + std::to_string(id));
  return it->second;
}

Var Grads::node(Var v) const {
  auto it = nodes_.find(v.id());
  if (it == nodes_.end()) throw std::out_of_range("autodiff: gradient was not recorded for node " + std::to_string(v.id()));
  return it->second;
}

Grads backward(Tape& tape, Var output, std::span<const Var> wrt, bool record) {
  if (output.tape() != &tape) throw std::invalid_argument("autodiff: output is not on this tape");
  if (!is_scalar(output.value())) throw ShapeError("autodiff: backward needs a scalar output, got " + shape_str(output.value()));

  const std::size_t entry_size = tape.size();
  const NodeId out = output.id();

  // needs[i]: some wrt node is reachable backwards from node i.
  std::vector<char> needs(out + 1, 0);
  for (Var w : wrt) {
    if (w.tape() != &tape) throw std::invalid_argument("autodiff: wrt node is not on this tape");
    if (w.id() <= out) needs[w.id()] = 1;
  }
  for (NodeId i = 0; i <= out; ++i) {
    const Node& n = tape.node(i);
    if (n.op == OpKind::SlopeMask) continue;  // piecewise constant
    for (std::uint8_t k = 0; k < n.arity; ++k)
      if (needs[n.inputs[k]]) needs[i] = 1;
  }

  std::vector<Var> adj(out + 1);
  auto accumulate = [&](NodeId id, Var contribution) {
    adj[id] = adj[id].valid() ? add(adj[id], contribution) : contribution;
  };

  if (needs[out]) adj[out] = tape.ones(1, 1);

  for (NodeId i = out + 1; i-- > 0;) {
    if (!needs[i] || !adj[i].valid()) continue;
    const Node& n = tape.node(i);
    const OpKind op = n.op;
    const double param = n.param;
    const NodeId ia = n.inputs[0];
    const NodeId ib = n.inputs[1];
    Var g = adj[i];
    Var y = tape.var(i);

    switch (op) {
      case OpKind::Leaf:
      case OpKind::SlopeMask:
        break;
      case OpKind::Add: {
        Var a = tape.var(ia), b = tape.var(ib);
        if (needs[ia]) accumulate(ia, reduce_to(g, a.value()));
        if (needs[ib]) accumulate(ib, reduce_to(g, b.value()));
        break;
      }
      case OpKind::Sub: {
        Var a = tape.var(ia), b = tape.var(ib);
        if (needs[ia]) accumulate(ia, reduce_to(g, a.value()));
        if (needs[ib]) accumulate(ib, reduce_to(neg(g), b.value()));
        break;
      }
      case OpKind::Mul: {
        Var a = tape.var(ia), b = tape.var(ib);
        if (needs[ia]) accumulate(ia, reduce_to(g * b, a.value()));
        if (needs[ib]) accumulate(ib, reduce_to(g * a, b.value()));
        break;
      }
      case OpKind::Div: {
        Var a = tape.var(ia), b = tape.var(ib);
        if (needs[ia]) accumulate(ia, reduce_to(g / b, a.value()));
        if (needs[ib]) accumulate(ib, reduce_to(neg(g * y / b), b.value()));
        break;
      }
      case OpKind::Neg:
        accumulate(ia, neg(g));
        break;
      case OpKind::MatMul: {
        Var a = tape.var(ia), b = tape.var(ib);
        if (needs[ia]) accumulate(ia, matmul(g, transpose(b)));
        if (needs[ib]) accumulate(ib, matmul(transpose(a), g));
        break;
      }
      case OpKind::Transpose:
        accumulate(ia, transpose(g));
        break;
      case OpKind::Relu:
        accumulate(ia, g * slope_mask(tape.var(ia), 0.0));
        break;
      case OpKind::LeakyRelu:
        accumulate(ia, g * slope_mask(tape.var(ia), param));
        break;
      case OpKind::Tanh:
        accumulate(ia, g * (1.0 - square(y)));
        break;
      case OpKind::Exp:
        accumulate(ia, g * y);
        break;
      case OpKind::Log:
        accumulate(ia, g / tape.var(ia));
        break;
      case OpKind::Square:
        accumulate(ia, g * tape.var(ia) * 2.0);
        break;
      case OpKind::Sqrt:
        accumulate(ia, (g / y) * 0.5);
        break;
      case OpKind::Sum: {
        const Tensor& a = tape.node(ia).value;
        accumulate(ia, g * tape.ones(a.rows(), a.cols()));
        break;
      }
    }
  }

  Grads grads;
  for (Var w : wrt) {
    const NodeId id = w.id();
    if (id <= out && adj[id].valid()) {
      grads.values_[id] = adj[id].value();
      if (record) grads.nodes_[id] = adj[id];
    } else {
      const Tensor& v = w.value();
      grads.values_[id] = Tensor::Zero(v.rows(), v.cols());
      if (record) grads.nodes_[id] = tape.leaf(Tensor::Zero(v.rows(), v.cols()));
    }
  }
  if (!record) tape.truncate(entry_size);
  return grads;
}

}  // namespace mdda::ad
