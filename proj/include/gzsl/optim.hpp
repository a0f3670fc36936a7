#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gzsl/tape.hpp"

namespace gzsl::optim {

enum class OptimizerKind { kSgdMomentum, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

// Stateful first-order optimizer. State is keyed by position in the parameter
// list, so every step must pass the same parameters in the same order.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Parameter* const> params, double lr) = 0;
};

// v <- mu v + g;  p <- p - lr v
class SgdMomentum final : public Optimizer {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}
  void step(std::span<Parameter* const> params, double lr) override;

 private:
  double momentum_;
  std::vector<Tensor2> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Parameter* const> params, double lr) override;

 private:
  double beta1_;
  double beta2_;
  double eps_;
  long steps_ = 0;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind);

// base_lr * (1 - step / total_steps)^power. Throws DomainError if step > total_steps.
double poly_lr(double base_lr, std::size_t step, std::size_t total_steps, double power = 0.9);

void zero_grad(std::span<Parameter* const> params);

}  // namespace gzsl::optim
