#include "gzsl/layers.hpp"

#include <cmath>

#include "gzsl/error.hpp"

namespace gzsl {

Dense::Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", Tensor2(in, out)), bias(name + ".bias", Tensor2(1, out)) {
  // Glorot-uniform.
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : weight.value.values()) w = rng.uniform(-limit, limit);
}

Var Dense::forward(Tape& tape, Var x) { return ad::affine(x, tape.param(weight), tape.param(bias)); }

Tensor2 Dense::apply(const Tensor2& x) const { return affine(x, weight.value, bias.value.values()); }

std::vector<Parameter*> Dense::parameters() { return {&weight, &bias}; }
std::vector<const Parameter*> Dense::parameters() const { return {&weight, &bias}; }

Mlp::Mlp(const std::string& name, std::vector<std::size_t> dims, Activation hidden, Rng& rng)
    : hidden_(hidden) {
  if (dims.size() < 2) throw ShapeError("Mlp needs at least input and output dimensions");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Var Mlp::forward(Tape& tape, Var x) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(tape, x);
    if (i + 1 < layers_.size()) x = hidden_ == Activation::kRelu ? ad::relu(x) : ad::tanh(x);
  }
  return x;
}

Tensor2 Mlp::apply(const Tensor2& input) const {
  Tensor2 x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].apply(x);
    if (i + 1 < layers_.size()) {
      for (double& v : x.values()) v = hidden_ == Activation::kRelu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    }
  }
  return x;
}

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> d;
  for (const Dense& l : layers_) d.push_back(l.in_dim());
  if (!layers_.empty()) d.push_back(layers_.back().out_dim());
  return d;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (Dense& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const Dense& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace gzsl
