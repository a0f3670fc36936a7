#pragma once

// Segmentation metrics over a confusion matrix (rows = ground truth, columns =
// prediction), reliability diagrams, and the calibration-factor sweep.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gzsl/calibration.hpp"
#include "gzsl/tensor.hpp"
#include "gzsl/vendor_json.hpp"

namespace gzsl::metrics {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t n_classes);

  // Throws DomainError for ids outside [0, n).
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  ConfusionMatrix& merge(const ConfusionMatrix& other);

  std::size_t n_classes() const { return n_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::uint64_t total() const;
  std::uint64_t tp(std::size_t k) const { return at(k, k); }
  std::uint64_t fp(std::size_t k) const;
  std::uint64_t fn(std::size_t k) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  double value = 0.0;
  std::vector<double> iou;              // per class of the subset; NaN for excluded
  std::vector<std::size_t> excluded;    // zero-denominator classes
};

// Mean IoU over `classes`. Classes with TP + FP + FN = 0 are excluded and
// reported. Throws DomainError for an empty subset or when every class is excluded.
MiouResult miou(const ConfusionMatrix& cm, std::span<const std::size_t> classes);

// 2 s u / (s + u); 0 when either is 0. Throws DomainError for negative input.
double hmiou(double seen, double unseen);

// Unweighted mean over all classes from the two group means.
double all_miou(double seen, std::size_t n_seen, double unseen, std::size_t n_unseen);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf prf_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);
Prf precision_recall_f1(const ConfusionMatrix& cm, std::size_t k);
// Group as one binary class: a point is positive when its truth is in the
// group and predicted positive when its prediction is in the group.
Prf group_precision_recall_f1(const ConfusionMatrix& cm, const std::vector<bool>& in_group);
// Mean per-class F1 over all classes.
double macro_f1(const ConfusionMatrix& cm);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::uint64_t count = 0;
  double confidence = 0.0;  // mean max-probability in the bin; 0 when empty
  double accuracy = 0.0;    // 0 when empty
  double gap = 0.0;         // |accuracy - confidence|
};

struct ReliabilityReport {
  std::vector<ReliabilityBin> bins;
  std::uint64_t total = 0;
  double ece = 0.0;  // count-weighted mean gap
  nlohmann::ordered_json to_json() const;
};

// Bin b covers [b/n, (b+1)/n), the last bin also takes 1. Throws DomainError
// on an empty batch or labels/rows mismatch.
std::size_t reliability_bin(double confidence, std::size_t n_bins);
ReliabilityReport reliability(const Tensor2& p, std::span<const int> labels, std::size_t n_bins = 10);

// Everything the metric suite needs from a forward pass over an evaluation set.
struct Predictions {
  Tensor2 p;                 // pre-calibration posterior, N x N_c
  std::vector<double> u;     // uncertainty per point
  std::vector<int> labels;   // ground truth
};

// Metrics of one labelled prediction.
struct Report {
  double seen_miou = 0.0;
  double unseen_miou = 0.0;
  double all_miou = 0.0;
  double hmiou = 0.0;
  double f1 = 0.0;  // macro over classes
  Prf seen;         // seen group, binary
  Prf unseen;       // unseen group, binary
  std::vector<double> class_iou;
  std::vector<Prf> class_prf;
  std::vector<std::size_t> excluded;
  ConfusionMatrix confusion;

  nlohmann::ordered_json to_json(const std::vector<std::string>& class_names) const;
};

Report summarize(const ConfusionMatrix& cm, const calibration::SeenMask& mask);

// Confusion matrix of calibrated predictions.
ConfusionMatrix confusion(const Predictions& pred, const calibration::SeenMask& mask,
                          const calibration::CalibrationFactor& factor);

struct SweepRow {
  std::optional<double> eta;  // empty for the dynamic row
  double seen_miou = 0.0;
  double unseen_miou = 0.0;
  double hmiou = 0.0;
  double f1 = 0.0;
  double seen_recall = 0.0;
  double unseen_recall = 0.0;
};

// One row per grid value, then the dynamic-eta row with the given u_bar.
// Throws DomainError for grid values outside [0, 1].
std::vector<SweepRow> eta_sweep(const Predictions& pred, const calibration::SeenMask& mask,
                                std::span<const double> grid, double u_bar);
// "lo:hi:step", inclusive of hi up to rounding. Throws ValidationError.
std::vector<double> parse_grid(const std::string& text);
std::string sweep_csv(const std::vector<SweepRow>& rows);
nlohmann::ordered_json sweep_json(const std::vector<SweepRow>& rows);

}  // namespace gzsl::metrics
