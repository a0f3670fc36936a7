#include "gzsl/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gzsl/error.hpp"
#include "gzsl/special.hpp"

namespace gzsl::evidential {
namespace {

double clamp_logit(double l) { return std::clamp(l, -kLogitClamp, kLogitClamp); }

bool is_seen(int target) { return target >= 0; }

void check_targets(std::size_t rows, std::size_t n_seen, std::span<const int> targets) {
  if (targets.size() != rows) {
    throw ShapeError("evidential: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " samples");
  }
  for (int t : targets) {
    if (t != kUnseen && (t < 0 || static_cast<std::size_t>(t) >= n_seen)) {
      throw DomainError("evidential: target " + std::to_string(t) + " is outside the seen set of size " +
                        std::to_string(n_seen));
    }
  }
}

double row_sum(const Tensor2& t, std::size_t r) {
  double s = 0.0;
  for (double v : t.row_span(r)) s += v;
  return s;
}

void check_positive(const Tensor2& alpha, const char* what) {
  for (double a : alpha.values()) {
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError(std::string(what) + ": nonpositive concentration");
  }
}

double clamp_u(double u) { return std::clamp(u, kUncertaintyEps, 1.0 - kUncertaintyEps); }

// Whether the sample's log(1 - u) term is active (the other one is log u).
bool uses_log_one_minus_u(int target, BlOrientation orientation) {
  const bool seen = is_seen(target);
  return orientation == BlOrientation::kTextualIntent ? seen : !seen;
}

}  // namespace

void EvidentialLossWeights::validate() const {
  if (!(lambda_dl >= 0.0) || !std::isfinite(lambda_dl) || !(lambda_bl >= 0.0) || !std::isfinite(lambda_bl)) {
    throw DomainError("evidential loss weights must be finite and nonnegative");
  }
}

ConcentrationVector::ConcentrationVector(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.empty()) throw DomainError("empty concentration vector");
  for (double a : alpha_) {
    if (!(a >= 1.0) || !std::isfinite(a)) throw DomainError("concentration parameters must be >= 1");
    alpha0_ += a;
  }
}

ConcentrationVector ConcentrationVector::from_evidence(std::span<const double> evidence) {
  std::vector<double> alpha(evidence.begin(), evidence.end());
  for (double& a : alpha) {
    if (!(a >= 0.0)) throw DomainError("evidence must be nonnegative");
    a += 1.0;
  }
  return ConcentrationVector(std::move(alpha));
}

ConcentrationVector evidence_from_logits(std::span<const double> logits) {
  std::vector<double> alpha(logits.size());
  std::transform(logits.begin(), logits.end(), alpha.begin(),
                 [](double l) { return std::exp(clamp_logit(l)) + 1.0; });
  return ConcentrationVector(std::move(alpha));
}

Tensor2 evidence_from_logits(const Tensor2& logits) {
  Tensor2 alpha(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) alpha.data()[i] = std::exp(clamp_logit(logits.data()[i])) + 1.0;
  return alpha;
}

UncertaintyScore uncertainty(const ConcentrationVector& alpha) {
  return {static_cast<double>(alpha.size()) / alpha.alpha0()};
}

std::vector<double> uncertainty(const Tensor2& alpha) {
  std::vector<double> u(alpha.rows());
  const double k = static_cast<double>(alpha.cols());
  for (std::size_t r = 0; r < alpha.rows(); ++r) u[r] = k / row_sum(alpha, r);
  return u;
}

std::vector<double> modify_alpha(std::span<const double> alpha, int target) {
  std::vector<double> out(alpha.begin(), alpha.end());
  if (!is_seen(target)) return out;
  if (static_cast<std::size_t>(target) >= alpha.size()) throw DomainError("modify_alpha: target outside seen set");
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double root = std::sqrt(alpha[k]);
    out[k] = static_cast<int>(k) == target ? 1.0 + 1.0 / root : root;
  }
  return out;
}

Tensor2 modify_alpha(const Tensor2& alpha, std::span<const int> targets) {
  check_targets(alpha.rows(), alpha.cols(), targets);
  Tensor2 out(alpha.rows(), alpha.cols());
  for (std::size_t r = 0; r < alpha.rows(); ++r) {
    const auto row = modify_alpha(alpha.row_span(r), targets[r]);
    std::copy(row.begin(), row.end(), out.row_span(r).begin());
  }
  return out;
}

double loss_sl(const Tensor2& alpha, std::span<const int> targets) {
  check_targets(alpha.rows(), alpha.cols(), targets);
  check_positive(alpha, "loss_sl");
  double total = 0.0;
  std::size_t n_seen = 0;
  for (std::size_t r = 0; r < alpha.rows(); ++r) {
    if (!is_seen(targets[r])) continue;
    total -= digamma(alpha(r, static_cast<std::size_t>(targets[r]))) - digamma(row_sum(alpha, r));
    ++n_seen;
  }
  return n_seen == 0 ? 0.0 : total / static_cast<double>(n_seen);
}

double dirichlet_kl_to_uniform(std::span<const double> a) {
  double a0 = 0.0;
  for (double v : a) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("loss_dl: nonpositive concentration");
    a0 += v;
  }
  const double psi0 = digamma(a0);
  double kl = std::lgamma(a0) - std::lgamma(static_cast<double>(a.size()));
  for (double v : a) kl += -std::lgamma(v) + (v - 1.0) * (digamma(v) - psi0);
  return kl;
}

double loss_dl(const Tensor2& alpha_tilde) {
  if (alpha_tilde.rows() == 0) throw ShapeError("loss_dl: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < alpha_tilde.rows(); ++r) total += dirichlet_kl_to_uniform(alpha_tilde.row_span(r));
  return total / static_cast<double>(alpha_tilde.rows());
}

double loss_bl(std::span<const double> u, std::span<const int> targets, BlOrientation orientation) {
  if (u.size() != targets.size()) throw ShapeError("loss_bl: uncertainty and target counts differ");
  if (u.empty()) throw ShapeError("loss_bl: empty batch");
  double total = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double uc = clamp_u(u[j]);
    total -= uses_log_one_minus_u(targets[j], orientation) ? std::log(1.0 - uc) : std::log(uc);
  }
  return total / static_cast<double>(u.size());
}

LossBreakdown loss_ev(const Tensor2& alpha, std::span<const int> targets, const EvidentialLossWeights& weights) {
  weights.validate();
  LossBreakdown out;
  out.sl = loss_sl(alpha, targets);
  out.dl = loss_dl(modify_alpha(alpha, targets));
  out.bl = loss_bl(uncertainty(alpha), targets, weights.bl_orientation);
  out.total = out.sl + weights.lambda_dl * out.dl + weights.lambda_bl * out.bl;
  return out;
}

// ---------------------------------------------------------------------------
// Taped versions. Each records the value computed above and its closed-form
// adjoint.

Var evidence_from_logits(Var logits) {
  Tape& tape = *logits.tape();
  return tape.record(evidence_from_logits(logits.value()), {logits}, [logits](Tape& tp, const Tensor2& g) {
    const Tensor2& l = logits.value();
    Tensor2 gl(l.rows(), l.cols());
    for (std::size_t i = 0; i < l.size(); ++i) {
      const double x = l.data()[i];
      gl.data()[i] = (x > -kLogitClamp && x < kLogitClamp) ? g.data()[i] * std::exp(x) : 0.0;
    }
    tp.accumulate(logits, gl);
  });
}

Var uncertainty(Var alpha) {
  Tape& tape = *alpha.tape();
  const auto u = uncertainty(alpha.value());
  Tensor2 out(u.size(), 1, std::vector<double>(u.begin(), u.end()));
  return tape.record(std::move(out), {alpha}, [alpha](Tape& tp, const Tensor2& g) {
    const Tensor2& a = alpha.value();
    const double k = static_cast<double>(a.cols());
    Tensor2 ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double a0 = row_sum(a, r);
      const double d = -k / (a0 * a0) * g(r, 0);
      for (double& v : ga.row_span(r)) v = d;
    }
    tp.accumulate(alpha, ga);
  });
}

Var modify_alpha(Var alpha, std::vector<int> targets) {
  Tape& tape = *alpha.tape();
  Tensor2 out = modify_alpha(alpha.value(), targets);
  return tape.record(std::move(out), {alpha}, [alpha, targets = std::move(targets)](Tape& tp, const Tensor2& g) {
    const Tensor2& a = alpha.value();
    Tensor2 ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double x = a(r, k);
        double d = 1.0;
        if (is_seen(targets[r])) {
          d = static_cast<int>(k) == targets[r] ? -0.5 / (x * std::sqrt(x)) : 0.5 / std::sqrt(x);
        }
        ga(r, k) = g(r, k) * d;
      }
    }
    tp.accumulate(alpha, ga);
  });
}

Var loss_sl(Var alpha, std::vector<int> targets) {
  Tape& tape = *alpha.tape();
  const double value = loss_sl(alpha.value(), targets);
  return tape.record(Tensor2::scalar(value), {alpha}, [alpha, targets = std::move(targets)](Tape& tp, const Tensor2& g) {
    const Tensor2& a = alpha.value();
    const auto n_seen = static_cast<double>(std::count_if(targets.begin(), targets.end(), is_seen));
    if (n_seen == 0.0) return;
    const double scale = g.item() / n_seen;
    Tensor2 ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (!is_seen(targets[r])) continue;
      const double tri0 = trigamma(row_sum(a, r));
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double own = static_cast<int>(k) == targets[r] ? trigamma(a(r, k)) : 0.0;
        ga(r, k) = -scale * (own - tri0);
      }
    }
    tp.accumulate(alpha, ga);
  });
}

Var loss_dl(Var alpha_tilde) {
  Tape& tape = *alpha_tilde.tape();
  const double value = loss_dl(alpha_tilde.value());
  return tape.record(Tensor2::scalar(value), {alpha_tilde}, [alpha_tilde](Tape& tp, const Tensor2& g) {
    const Tensor2& a = alpha_tilde.value();
    const double k = static_cast<double>(a.cols());
    const double scale = g.item() / static_cast<double>(a.rows());
    Tensor2 ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double a0 = row_sum(a, r);
      const double shared = (a0 - k) * trigamma(a0);
      for (std::size_t i = 0; i < a.cols(); ++i) ga(r, i) = scale * ((a(r, i) - 1.0) * trigamma(a(r, i)) - shared);
    }
    tp.accumulate(alpha_tilde, ga);
  });
}

Var loss_bl(Var u, std::vector<int> targets, BlOrientation orientation) {
  Tape& tape = *u.tape();
  if (u.cols() != 1) throw ShapeError("loss_bl: uncertainty must be a column");
  const double value = loss_bl(u.value().values(), targets, orientation);
  return tape.record(Tensor2::scalar(value), {u}, [u, targets = std::move(targets), orientation](Tape& tp, const Tensor2& g) {
    const Tensor2& uv = u.value();
    const double scale = g.item() / static_cast<double>(uv.rows());
    Tensor2 gu(uv.rows(), 1);
    for (std::size_t j = 0; j < uv.rows(); ++j) {
      const double x = uv(j, 0);
      if (x <= kUncertaintyEps || x >= 1.0 - kUncertaintyEps) continue;
      gu(j, 0) = uses_log_one_minus_u(targets[j], orientation) ? scale / (1.0 - x) : -scale / x;
    }
    tp.accumulate(u, gu);
  });
}

EvidentialLoss loss_ev(Var alpha, const std::vector<int>& targets, const EvidentialLossWeights& weights) {
  weights.validate();
  Var sl = loss_sl(alpha, targets);
  Var dl = loss_dl(modify_alpha(alpha, targets));
  Var bl = loss_bl(uncertainty(alpha), targets, weights.bl_orientation);
  Var total = ad::add(ad::add(sl, ad::scale(dl, weights.lambda_dl)), ad::scale(bl, weights.lambda_bl));
  LossBreakdown terms{total.value().item(), sl.value().item(), dl.value().item(), bl.value().item()};
  return {total, terms};
}

}  // namespace gzsl::evidential
