#pragma once

// Reverse-mode differentiation over Tensor2 values.
//
// A Tape is rebuilt for every forward pass: operations append nodes in
// evaluation order, backward() walks them in reverse and accumulates adjoints.
// Parameters are bound as leaves whose adjoints are added to Parameter::grad.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>

#include "gzsl/tensor.hpp"

namespace gzsl {

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor2 value);

  std::string name;
  Tensor2 value;
  Tensor2 grad;

  void zero_grad();
};

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor2& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Called with the node's accumulated output adjoint. Implementations add
  // into parent adjoints through accumulate()/grad_buffer().
  using Backward = std::function<void(Tape& tape, const Tensor2& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor2 value);
  // Differentiable input; read its adjoint with gradient() after backward().
  Var leaf(Tensor2 value);
  Var param(Parameter& p);
  Var record(Tensor2 value, std::initializer_list<Var> parents, Backward backward);

  // Seeds d(output)/d(output) = 1 and propagates. Throws ShapeError unless the
  // output is 1x1 and DomainError if it was recorded on another tape.
  void backward(Var output);

  const Tensor2& value(Var v) const;
  bool requires_grad(Var v) const;
  // Adjoint after backward(); zeros for nodes the output does not depend on.
  Tensor2 gradient(Var v) const;

  // For Backward implementations.
  Tensor2& grad_buffer(Var v);
  void accumulate(Var v, const Tensor2& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
};

// Differentiable operations. All operands must live on the same tape.
namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
// x * w + b with b a 1 x out row broadcast over the batch.
Var affine(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var add_row(Var a, Var row);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var sum(Var a);   // 1x1
Var mean(Var a);  // 1x1
Var concat_cols(Var a, Var b);
Var gather_rows(Var a, std::vector<std::size_t> rows);

}  // namespace ad
}  // namespace gzsl
