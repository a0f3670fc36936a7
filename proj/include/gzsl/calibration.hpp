#pragma once

// Class posteriors, cross-entropy, and calibrated stacking: seen-class
// posteriors are lowered by a factor eta before the argmax, either a fixed
// value (static) or eta = clamp(u - u_bar, 0, 1) per point (dynamic).

#include <span>
#include <string>
#include <vector>

#include "gzsl/tape.hpp"

namespace gzsl::calibration {

// Per-class seen flag, indexed by class id.
class SeenMask {
 public:
  SeenMask() = default;
  explicit SeenMask(std::vector<bool> seen);

  bool seen(std::size_t class_id) const { return seen_[class_id]; }
  std::size_t size() const { return seen_.size(); }
  std::size_t n_seen() const { return n_seen_; }

 private:
  std::vector<bool> seen_;
  std::size_t n_seen_ = 0;
};

struct ProbabilityVector {
  std::vector<double> p;        // softmax posterior, sums to 1
  std::vector<double> p_prime;  // p - eta on seen classes; only its argmax is used
};

// Max-shifted softmax.
std::vector<double> softmax_posterior(std::span<const double> logits);
Tensor2 softmax_posterior(const Tensor2& logits);

// -(1/N) sum_j log max(p_{j,y_j}, 1e-12).
double cross_entropy(const Tensor2& p, std::span<const int> labels);

// Softmax + cross-entropy on logits, for training. Adjoint (p - onehot) / N.
Var softmax_cross_entropy(Var logits, std::vector<int> labels);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

struct CalibratedPrediction {
  std::vector<double> p_prime;
  std::size_t predicted = 0;
};

// Throws DomainError unless eta is in [0, 1].
CalibratedPrediction calibrated_stack(std::span<const double> p, double eta, const SeenMask& mask);
// The argmax of calibrated_stack without materializing p'.
std::size_t calibrated_argmax(std::span<const double> p, double eta, const SeenMask& mask);

// clamp(u - u_bar, 0, 1).
double dynamic_eta(double u, double u_bar);

// Mean u over points whose uncalibrated argmax is an unseen class, falling back
// to the mean over all points when none is. Throws on an empty batch.
double estimate_u_bar(const Tensor2& p, std::span<const double> u, const SeenMask& mask);

enum class CalibrationMode { kNone, kStatic, kDynamic };
enum class UBarScope { kDataset, kPerScene };

struct CalibrationFactor {
  CalibrationMode mode = CalibrationMode::kNone;
  double eta = 0.0;    // kStatic
  double u_bar = 0.0;  // kDynamic, filled by the pre-pass

  // Effective eta for a point with uncertainty u.
  double eta_for(double u) const;
};

// "none", "static:ETA", or "dynamic". Throws ValidationError otherwise.
CalibrationFactor parse_calibration(const std::string& text);
std::string to_string(const CalibrationFactor& c);

}  // namespace gzsl::calibration
