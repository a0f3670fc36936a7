#include "gzsl/optim.hpp"

#include <cmath>

#include "gzsl/error.hpp"

namespace gzsl::optim {
namespace {

void init_state(std::vector<Tensor2>& state, std::span<Parameter* const> params) {
  if (state.empty()) {
    for (const Parameter* p : params) state.emplace_back(p->value.rows(), p->value.cols());
  }
  if (state.size() != params.size()) throw ShapeError("optimizer: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(state[i], params[i]->value, "optimizer state");
    if (params[i]->grad.empty()) {
      params[i]->zero_grad();
    } else {
      require_same_shape(params[i]->grad, params[i]->value, params[i]->name.c_str());
    }
  }
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd-momentum"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ValidationError("unknown optimizer '" + name + "' (expected adam or sgd-momentum)");
}

void SgdMomentum::step(std::span<Parameter* const> params, double lr) {
  init_state(velocity_, params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* v = velocity_[i].data();
    double* w = params[i]->value.data();
    const double* g = params[i]->grad.data();
    for (std::size_t k = 0; k < velocity_[i].size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      w[k] -= lr * v[k];
    }
  }
}

void Adam::step(std::span<Parameter* const> params, double lr) {
  init_state(m_, params);
  init_state(v_, params);
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* w = params[i]->value.data();
    const double* g = params[i]->grad.data();
    for (std::size_t k = 0; k < m_[i].size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind) {
  if (kind == OptimizerKind::kAdam) return std::make_unique<Adam>();
  return std::make_unique<SgdMomentum>();
}

double poly_lr(double base_lr, std::size_t step, std::size_t total_steps, double power) {
  if (step > total_steps) {
    throw DomainError("poly_lr: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  if (total_steps == 0) return base_lr;
  return base_lr * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total_steps), power);
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace gzsl::optim
