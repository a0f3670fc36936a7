#pragma once

#include <string>
#include <vector>

#include "gzsl/rng.hpp"
#include "gzsl/tape.hpp"

namespace gzsl {

// Fully connected layer: y = x W + b, W is in x out.
struct Dense {
  Parameter weight;
  Parameter bias;

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var forward(Tape& tape, Var x);
  Tensor2 apply(const Tensor2& x) const;
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

enum class Activation { kRelu, kTanh };

// Stack of Dense layers with a hidden activation; the last layer is linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::vector<std::size_t> dims, Activation hidden, Rng& rng);

  Var forward(Tape& tape, Var x);
  // Same arithmetic as forward() without recording.
  Tensor2 apply(const Tensor2& x) const;

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<std::size_t> dims() const;
  Activation activation() const { return hidden_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
  Activation hidden_ = Activation::kRelu;
};

}  // namespace gzsl
