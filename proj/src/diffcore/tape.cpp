#include "gzsl/tape.hpp"

#include <algorithm>
#include <cmath>

#include "gzsl/error.hpp"
#include "gzsl/kernels.hpp"

namespace gzsl {

Parameter::Parameter(std::string name_, Tensor2 value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) grad = Tensor2(value.rows(), value.cols());
  grad.fill(0.0);
}

const Tensor2& Var::value() const {
  if (tape_ == nullptr) throw DomainError("value() on an unbound Var");
  return tape_->value(*this);
}

Tape::Node& Tape::node(Var v) {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw DomainError("Var is not recorded on this tape");
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw DomainError("Var is not recorded on this tape");
  return nodes_[v.id_];
}

Var Tape::constant(Tensor2 value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor2 value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, true, false, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor2 value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || node(p).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false, nullptr,
                        needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor2& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor2 Tape::gradient(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) return Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor2& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor2(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor2& g) {
  if (!requires_grad(v)) return;
  Tensor2& buf = grad_buffer(v);
  require_same_shape(buf, g, "gradient accumulation");
  buf += g;
}

void Tape::backward(Var output) {
  Node& out = node(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ShapeError("backward: output must be a scalar, got " + shape_string(out.value));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor2();
  }
  grad_buffer(output)(0, 0) = 1.0;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    }
    if (n.param != nullptr) {
      if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace ad {
namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw DomainError("operands recorded on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw DomainError("operand is not recorded on a tape");
  return *a.tape();
}

template <class F>
Tensor2 map(const Tensor2& a, F f) {
  Tensor2 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = f(a.data()[i]);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(gzsl::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, gzsl::matmul_nt(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, gzsl::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(gzsl::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, gzsl::matmul(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, gzsl::matmul_tn(g, a.value()));
  });
}

Var affine(Var x, Var w, Var b) {
  Tape& t = tape_of(x, w);
  tape_of(w, b);
  if (b.rows() != 1) throw ShapeError("affine: bias must be a single row, got " + shape_string(b.value()));
  Tensor2 out = gzsl::affine(x.value(), w.value(), b.value().values());
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape& tp, const Tensor2& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, gzsl::matmul_nt(g, w.value()));
    if (tp.requires_grad(w)) tp.accumulate(w, gzsl::matmul_tn(x.value(), g));
    if (tp.requires_grad(b)) {
      Tensor2& gb = tp.grad_buffer(b);
      const auto& kt = kernels::active();
      for (std::size_t r = 0; r < g.rows(); ++r) kt.add(g.row_span(r).data(), gb.data(), g.cols());
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor2 out = a.value();
  out += b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor2 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, map(g, [](double v) { return -v; }));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor2 out = a.value();
  kernels::active().mul(b.value().data(), out.data(), out.size());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    const auto& kt = kernels::active();
    if (tp.requires_grad(a)) {
      Tensor2 ga = g;
      kt.mul(b.value().data(), ga.data(), ga.size());
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor2 gb = g;
      kt.mul(a.value().data(), gb.data(), gb.size());
      tp.accumulate(b, gb);
    }
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_string(a.value()) + " + " + shape_string(row.value()));
  }
  Tensor2 out = a.value();
  const auto& kt = kernels::active();
  for (std::size_t r = 0; r < out.rows(); ++r) kt.add(row.value().data(), out.row_span(r).data(), out.cols());
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Tensor2& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) {
      Tensor2& gr = tp.grad_buffer(row);
      const auto& k = kernels::active();
      for (std::size_t r = 0; r < g.rows(); ++r) k.add(g.row_span(r).data(), gr.data(), g.cols());
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [c](double v) { return c * v; }), {a},
                  [a, c](Tape& tp, const Tensor2& g) { tp.accumulate(a, map(g, [c](double v) { return c * v; })); });
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [c](double v) { return v + c; }), {a},
                  [a](Tape& tp, const Tensor2& g) { tp.accumulate(a, g); });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Tensor2 out = map(a.value(), [](double v) { return std::tanh(v); });
  Tensor2 y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& tp, const Tensor2& g) {
    Tensor2 ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
    tp.accumulate(a, ga);
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a},
                  [a](Tape& tp, const Tensor2& g) {
                    Tensor2 ga(g.rows(), g.cols());
                    const Tensor2& x = a.value();
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
                    tp.accumulate(a, ga);
                  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Tensor2 out = map(a.value(), [](double v) { return std::exp(v); });
  Tensor2 y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& tp, const Tensor2& g) {
    Tensor2 ga = g;
    kernels::active().mul(y.data(), ga.data(), ga.size());
    tp.accumulate(a, ga);
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return std::log(v); }), {a}, [a](Tape& tp, const Tensor2& g) {
    Tensor2 ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] / a.value().data()[i];
    tp.accumulate(a, ga);
  });
}

Var sqrt(Var a) {
  Tape& t = tape_of(a);
  Tensor2 out = map(a.value(), [](double v) { return std::sqrt(v); });
  Tensor2 y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& tp, const Tensor2& g) {
    Tensor2 ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = g.data()[i] * 0.5 / y.data()[i];
    tp.accumulate(a, ga);
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return v * v; }), {a}, [a](Tape& tp, const Tensor2& g) {
    Tensor2 ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] = 2.0 * a.value().data()[i] * g.data()[i];
    tp.accumulate(a, ga);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor2::scalar(s), {a}, [a](Tape& tp, const Tensor2& g) {
    tp.accumulate(a, Tensor2(a.rows(), a.cols(), g.item()));
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(gzsl::concat_cols(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    const std::size_t ca = a.cols();
    if (tp.requires_grad(a)) {
      Tensor2 ga(g.rows(), ca);
      for (std::size_t r = 0; r < g.rows(); ++r)
        std::copy_n(g.row_span(r).begin(), ca, ga.row_span(r).begin());
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor2 gb(g.rows(), b.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        std::copy(g.row_span(r).begin() + ca, g.row_span(r).end(), gb.row_span(r).begin());
      tp.accumulate(b, gb);
    }
  });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  Tape& t = tape_of(a);
  Tensor2 out = gzsl::gather_rows(a.value(), rows);
  return t.record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& tp, const Tensor2& g) {
    if (!tp.requires_grad(a)) return;
    Tensor2& ga = tp.grad_buffer(a);
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < rows.size(); ++i) kt.add(g.row_span(i).data(), ga.row_span(rows[i]).data(), g.cols());
  });
}

}  // namespace ad
}  // namespace gzsl
