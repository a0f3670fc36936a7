#include "gzsl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "gzsl/error.hpp"

namespace gzsl::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= n_ || predicted >= n_) {
    throw DomainError("confusion matrix: class id out of range (" + std::to_string(truth) + ", " +
                      std::to_string(predicted) + ") for " + std::to_string(n_) + " classes");
  }
  counts_[truth * n_ + predicted] += count;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ShapeError("confusion matrix merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::fp(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < n_; ++t) {
    if (t != k) s += at(t, k);
  }
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) {
    if (p != k) s += at(k, p);
  }
  return s;
}

MiouResult miou(const ConfusionMatrix& cm, std::span<const std::size_t> classes) {
  if (classes.empty()) throw DomainError("miou: empty class subset");
  MiouResult r;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k : classes) {
    if (k >= cm.n_classes()) throw DomainError("miou: class id " + std::to_string(k) + " out of range");
    const std::uint64_t denom = cm.tp(k) + cm.fp(k) + cm.fn(k);
    if (denom == 0) {
      r.iou.push_back(std::numeric_limits<double>::quiet_NaN());
      r.excluded.push_back(k);
      continue;
    }
    const double iou = static_cast<double>(cm.tp(k)) / static_cast<double>(denom);
    r.iou.push_back(iou);
    sum += iou;
    ++used;
  }
  if (used == 0) throw DomainError("miou: every class in the subset has a zero denominator");
  r.value = sum / static_cast<double>(used);
  return r;
}

double hmiou(double seen, double unseen) {
  if (seen < 0.0 || unseen < 0.0) throw DomainError("hmiou: negative mIoU");
  if (seen == 0.0 || unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

double all_miou(double seen, std::size_t n_seen, double unseen, std::size_t n_unseen) {
  if (n_seen + n_unseen == 0) throw DomainError("all_miou: no classes");
  return (static_cast<double>(n_seen) * seen + static_cast<double>(n_unseen) * unseen) /
         static_cast<double>(n_seen + n_unseen);
}

Prf prf_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  Prf r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

Prf precision_recall_f1(const ConfusionMatrix& cm, std::size_t k) {
  if (k >= cm.n_classes()) throw DomainError("precision_recall_f1: class id out of range");
  return prf_from_counts(cm.tp(k), cm.fp(k), cm.fn(k));
}

Prf group_precision_recall_f1(const ConfusionMatrix& cm, const std::vector<bool>& in_group) {
  if (in_group.size() != cm.n_classes()) throw ShapeError("group mask size differs from class count");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t t = 0; t < cm.n_classes(); ++t) {
    for (std::size_t p = 0; p < cm.n_classes(); ++p) {
      const std::uint64_t c = cm.at(t, p);
      if (in_group[t] && in_group[p]) tp += c;
      if (!in_group[t] && in_group[p]) fp += c;
      if (in_group[t] && !in_group[p]) fn += c;
    }
  }
  return prf_from_counts(tp, fp, fn);
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.n_classes() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < cm.n_classes(); ++k) s += precision_recall_f1(cm, k).f1;
  return s / static_cast<double>(cm.n_classes());
}

std::size_t reliability_bin(double confidence, std::size_t n_bins) {
  if (n_bins == 0) throw DomainError("reliability: need at least one bin");
  std::size_t b = 0;
  while (b + 1 < n_bins && confidence >= static_cast<double>(b + 1) / static_cast<double>(n_bins)) ++b;
  return b;
}

ReliabilityReport reliability(const Tensor2& p, std::span<const int> labels, std::size_t n_bins) {
  if (p.rows() == 0) throw DomainError("reliability: empty batch");
  if (p.rows() != labels.size()) throw ShapeError("reliability: label count differs from rows");
  ReliabilityReport r;
  r.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::uint64_t> correct(n_bins, 0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row_span(i);
    const std::size_t pred = calibration::argmax(row);
    const double c = row[pred];
    const std::size_t b = reliability_bin(c, n_bins);
    ++r.bins[b].count;
    conf_sum[b] += c;
    if (static_cast<int>(pred) == labels[i]) ++correct[b];
  }
  r.total = p.rows();
  for (std::size_t b = 0; b < n_bins; ++b) {
    ReliabilityBin& bin = r.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    if (bin.count > 0) {
      bin.confidence = conf_sum[b] / static_cast<double>(bin.count);
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(bin.count);
      bin.gap = std::abs(bin.accuracy - bin.confidence);
    }
    r.ece += static_cast<double>(bin.count) / static_cast<double>(r.total) * bin.gap;
  }
  return r;
}

nlohmann::ordered_json ReliabilityReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["ece"] = ece;
  j["bins"] = nlohmann::ordered_json::array();
  for (const ReliabilityBin& b : bins) {
    j["bins"].push_back({{"lower", b.lower},
                         {"upper", b.upper},
                         {"count", b.count},
                         {"fraction", total == 0 ? 0.0 : static_cast<double>(b.count) / static_cast<double>(total)},
                         {"confidence", b.confidence},
                         {"accuracy", b.accuracy},
                         {"gap", b.gap}});
  }
  return j;
}

Report summarize(const ConfusionMatrix& cm, const calibration::SeenMask& mask) {
  if (mask.size() != cm.n_classes()) throw ShapeError("summarize: seen mask size differs from class count");
  std::vector<std::size_t> seen, unseen, all(cm.n_classes());
  std::vector<bool> seen_group(cm.n_classes()), unseen_group(cm.n_classes());
  for (std::size_t k = 0; k < cm.n_classes(); ++k) {
    (mask.seen(k) ? seen : unseen).push_back(k);
    seen_group[k] = mask.seen(k);
    unseen_group[k] = !mask.seen(k);
    all[k] = k;
  }
  Report r;
  // Groups that never occur and are never predicted score 0 rather than throwing.
  auto safe = [&](const std::vector<std::size_t>& ids) {
    if (ids.empty()) return MiouResult{};
    bool any = false;
    for (std::size_t k : ids) any = any || cm.tp(k) + cm.fp(k) + cm.fn(k) > 0;
    return any ? miou(cm, ids) : MiouResult{0.0, std::vector<double>(ids.size(), std::nan("")), ids};
  };
  const MiouResult s = safe(seen);
  const MiouResult u = safe(unseen);
  const MiouResult a = safe(all);
  r.seen_miou = s.value;
  r.unseen_miou = u.value;
  r.all_miou = a.value;
  r.hmiou = hmiou(r.seen_miou, r.unseen_miou);
  r.f1 = macro_f1(cm);
  r.seen = group_precision_recall_f1(cm, seen_group);
  r.unseen = group_precision_recall_f1(cm, unseen_group);
  r.class_iou = a.iou;
  r.excluded = a.excluded;
  for (std::size_t k = 0; k < cm.n_classes(); ++k) r.class_prf.push_back(precision_recall_f1(cm, k));
  r.confusion = cm;
  return r;
}

namespace {

nlohmann::ordered_json prf_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

// NaN is not representable in JSON; excluded classes are written as null.
nlohmann::ordered_json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
}

}  // namespace

nlohmann::ordered_json Report::to_json(const std::vector<std::string>& class_names) const {
  nlohmann::ordered_json j;
  j["seen_miou"] = seen_miou;
  j["unseen_miou"] = unseen_miou;
  j["all_miou"] = all_miou;
  j["hmiou"] = hmiou;
  j["macro_f1"] = f1;
  j["seen_group"] = prf_json(seen);
  j["unseen_group"] = prf_json(unseen);
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < class_iou.size(); ++k) {
    nlohmann::ordered_json c;
    c["name"] = k < class_names.size() ? class_names[k] : std::to_string(k);
    c["iou"] = number_or_null(class_iou[k]);
    c["precision"] = class_prf[k].precision;
    c["recall"] = class_prf[k].recall;
    c["f1"] = class_prf[k].f1;
    classes.push_back(std::move(c));
  }
  j["classes"] = std::move(classes);
  j["excluded_classes"] = excluded;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < confusion.n_classes(); ++t) {
    std::vector<std::uint64_t> row(confusion.n_classes());
    for (std::size_t p = 0; p < confusion.n_classes(); ++p) row[p] = confusion.at(t, p);
    rows.push_back(row);
  }
  j["confusion"] = std::move(rows);
  return j;
}

ConfusionMatrix confusion(const Predictions& pred, const calibration::SeenMask& mask,
                          const calibration::CalibrationFactor& factor) {
  if (pred.p.rows() != pred.labels.size() || pred.p.rows() != pred.u.size()) {
    throw ShapeError("predictions: posterior rows, uncertainties and labels disagree");
  }
  if (pred.p.cols() != mask.size()) throw ShapeError("predictions: posterior width differs from seen mask");
  ConfusionMatrix cm(mask.size());
  for (std::size_t i = 0; i < pred.p.rows(); ++i) {
    const double eta = factor.eta_for(pred.u[i]);
    cm.add(static_cast<std::size_t>(pred.labels[i]), calibration::calibrated_argmax(pred.p.row_span(i), eta, mask));
  }
  return cm;
}

namespace {

SweepRow row_of(const ConfusionMatrix& cm, const calibration::SeenMask& mask, std::optional<double> eta) {
  const Report r = summarize(cm, mask);
  return {eta, r.seen_miou, r.unseen_miou, r.hmiou, r.f1, r.seen.recall, r.unseen.recall};
}

}  // namespace

std::vector<SweepRow> eta_sweep(const Predictions& pred, const calibration::SeenMask& mask,
                                std::span<const double> grid, double u_bar) {
  std::vector<SweepRow> rows;
  for (double eta : grid) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta_sweep: grid value outside [0, 1]");
    calibration::CalibrationFactor f{calibration::CalibrationMode::kStatic, eta, 0.0};
    rows.push_back(row_of(confusion(pred, mask, f), mask, eta));
  }
  calibration::CalibrationFactor dyn{calibration::CalibrationMode::kDynamic, 0.0, u_bar};
  rows.push_back(row_of(confusion(pred, mask, dyn), mask, std::nullopt));
  return rows;
}

std::vector<double> parse_grid(const std::string& text) {
  double lo = 0.0, hi = 0.0, step = 0.0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) != 3) {
    throw ValidationError("grid must look like lo:hi:step, got '" + text + "'");
  }
  if (!(step > 0.0) || hi < lo || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValidationError("grid needs step > 0 and lo <= hi");
  }
  // Index-based so 0:1:0.02 yields exactly 51 points ending at hi.
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> g;
  for (std::size_t i = 0; i <= n; ++i) g.push_back(i == n && std::abs(lo + n * step - hi) < 1e-9 ? hi : lo + i * step);
  return g;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "eta,seen_miou,unseen_miou,hmiou,f1,seen_recall,unseen_recall\n";
  for (const SweepRow& r : rows) {
    out += (r.eta ? fmt(*r.eta) : std::string("dynamic")) + "," + fmt(r.seen_miou) + "," + fmt(r.unseen_miou) + "," +
           fmt(r.hmiou) + "," + fmt(r.f1) + "," + fmt(r.seen_recall) + "," + fmt(r.unseen_recall) + "\n";
  }
  return out;
}

nlohmann::ordered_json sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const SweepRow& r : rows) {
    nlohmann::ordered_json e;
    e["eta"] = r.eta ? nlohmann::ordered_json(*r.eta) : nlohmann::ordered_json("dynamic");
    e["seen_miou"] = r.seen_miou;
    e["unseen_miou"] = r.unseen_miou;
    e["hmiou"] = r.hmiou;
    e["f1"] = r.f1;
    e["seen_recall"] = r.seen_recall;
    e["unseen_recall"] = r.unseen_recall;
    j.push_back(std::move(e));
  }
  return j;
}

}  // namespace gzsl::metrics
