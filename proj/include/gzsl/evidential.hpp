#pragma once

// Dirichlet evidence, uncertainty, and the evidential losses used to train the
// uncertainty head: segmentation (expected cross-entropy), divergence (KL to
// the uniform Dirichlet), and binary (seen/unseen uncertainty) losses.
//
// Batches are Tensor2 with one row per sample and one column per seen class.
// Targets are seen-class indices in [0, N_s), or kUnseen for samples that
// belong to an unseen class.

#include <span>
#include <vector>

#include "gzsl/tape.hpp"

namespace gzsl::evidential {

inline constexpr int kUnseen = -1;
inline constexpr double kLogitClamp = 40.0;
inline constexpr double kUncertaintyEps = 1e-7;

// Which indicator multiplies which log term of the binary loss. kTextualIntent
// lowers u for seen samples and raises it for unseen ones; kAsPrinted swaps
// the two indicators.
enum class BlOrientation { kTextualIntent, kAsPrinted };

struct EvidentialLossWeights {
  double lambda_dl = 0.005;
  double lambda_bl = 0.01;
  BlOrientation bl_orientation = BlOrientation::kTextualIntent;

  // Throws DomainError for negative or non-finite coefficients.
  void validate() const;
};

struct UncertaintyScore {
  double value = 1.0;
};

// alpha_k = evidence_k + 1 >= 1 over the N_s seen classes.
class ConcentrationVector {
 public:
  // Throws DomainError if any component is < 1 or non-finite.
  explicit ConcentrationVector(std::vector<double> alpha);
  static ConcentrationVector from_evidence(std::span<const double> evidence);

  std::span<const double> alpha() const { return alpha_; }
  double alpha0() const { return alpha0_; }
  std::size_t size() const { return alpha_.size(); }

 private:
  std::vector<double> alpha_;
  double alpha0_ = 0.0;
};

// alpha_k = exp(clamp(logit_k, -40, 40)) + 1.
ConcentrationVector evidence_from_logits(std::span<const double> logits);
Tensor2 evidence_from_logits(const Tensor2& logits);

// u = N_s / alpha0.
UncertaintyScore uncertainty(const ConcentrationVector& alpha);
std::vector<double> uncertainty(const Tensor2& alpha);

// y (x) (1 + 1/sqrt(alpha)) + (1 - y) (x) sqrt(alpha) for a seen target;
// alpha unchanged for kUnseen.
std::vector<double> modify_alpha(std::span<const double> alpha, int target);
Tensor2 modify_alpha(const Tensor2& alpha, std::span<const int> targets);

// Mean over seen samples of -(psi(alpha_y) - psi(alpha0)); 0 if none is seen.
double loss_sl(const Tensor2& alpha, std::span<const int> targets);

// KL(Dir(alpha_tilde) || Dir(1)) for one sample.
double dirichlet_kl_to_uniform(std::span<const double> alpha_tilde);
// Mean of dirichlet_kl_to_uniform over the batch.
double loss_dl(const Tensor2& alpha_tilde);

// Mean binary cross-entropy of u against the seen/unseen split, u clamped to
// [1e-7, 1 - 1e-7].
double loss_bl(std::span<const double> u, std::span<const int> targets, BlOrientation orientation);

struct LossBreakdown {
  double total = 0.0;
  double sl = 0.0;
  double dl = 0.0;
  double bl = 0.0;
};

// L_SL + lambda_dl L_DL + lambda_bl L_BL. L_SL averages over seen samples,
// the other two over the whole batch.
LossBreakdown loss_ev(const Tensor2& alpha, std::span<const int> targets, const EvidentialLossWeights& weights);

// Differentiable counterparts.
Var evidence_from_logits(Var logits);
Var uncertainty(Var alpha);  // N x 1
Var modify_alpha(Var alpha, std::vector<int> targets);
Var loss_sl(Var alpha, std::vector<int> targets);
Var loss_dl(Var alpha_tilde);
Var loss_bl(Var u, std::vector<int> targets, BlOrientation orientation);

struct EvidentialLoss {
  Var total;
  LossBreakdown terms;
};
EvidentialLoss loss_ev(Var alpha, const std::vector<int>& targets, const EvidentialLossWeights& weights);

}  // namespace gzsl::evidential
