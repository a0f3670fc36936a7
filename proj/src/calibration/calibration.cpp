#include "gzsl/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "gzsl/error.hpp"

namespace gzsl::calibration {
namespace {

constexpr double kProbFloor = 1e-12;

void softmax_into(std::span<const double> logits, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

void require_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("calibration factor eta must lie in [0, 1]");
}

}  // namespace

SeenMask::SeenMask(std::vector<bool> seen) : seen_(std::move(seen)) {
  n_seen_ = static_cast<std::size_t>(std::count(seen_.begin(), seen_.end(), true));
}

std::vector<double> softmax_posterior(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax_posterior: empty logits");
  std::vector<double> p(logits.size());
  softmax_into(logits, p);
  return p;
}

Tensor2 softmax_posterior(const Tensor2& logits) {
  Tensor2 p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) softmax_into(logits.row_span(r), p.row_span(r));
  return p;
}

double cross_entropy(const Tensor2& p, std::span<const int> labels) {
  if (labels.size() != p.rows() || p.rows() == 0) throw ShapeError("cross_entropy: label count mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < p.rows(); ++j) {
    if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= p.cols()) {
      throw DomainError("cross_entropy: label outside [0, N_c)");
    }
    total -= std::log(std::max(p(j, static_cast<std::size_t>(labels[j])), kProbFloor));
  }
  return total / static_cast<double>(p.rows());
}

Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
  Tensor2 p = softmax_posterior(logits.value());
  const double value = cross_entropy(p, labels);
  return logits.tape()->record(
      Tensor2::scalar(value), {logits}, [logits, labels = std::move(labels), p = std::move(p)](Tape& tp, const Tensor2& g) {
        const double scale = g.item() / static_cast<double>(p.rows());
        Tensor2 gl(p.rows(), p.cols());
        for (std::size_t j = 0; j < p.rows(); ++j) {
          for (std::size_t k = 0; k < p.cols(); ++k) {
            const double onehot = static_cast<int>(k) == labels[j] ? 1.0 : 0.0;
            gl(j, k) = scale * (p(j, k) - onehot);
          }
        }
        tp.accumulate(logits, gl);
      });
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

CalibratedPrediction calibrated_stack(std::span<const double> p, double eta, const SeenMask& mask) {
  require_eta(eta);
  if (p.size() != mask.size()) throw ShapeError("calibrated_stack: posterior and mask sizes differ");
  CalibratedPrediction out;
  out.p_prime.assign(p.begin(), p.end());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (mask.seen(k)) out.p_prime[k] -= eta;
  }
  out.predicted = argmax(out.p_prime);
  return out;
}

std::size_t calibrated_argmax(std::span<const double> p, double eta, const SeenMask& mask) {
  require_eta(eta);
  if (p.size() != mask.size()) throw ShapeError("calibrated_argmax: posterior and mask sizes differ");
  std::size_t best = 0;
  double best_v = p[0] - (mask.seen(0) ? eta : 0.0);
  for (std::size_t k = 1; k < p.size(); ++k) {
    const double v = p[k] - (mask.seen(k) ? eta : 0.0);
    if (v > best_v) {
      best = k;
      best_v = v;
    }
  }
  return best;
}

double dynamic_eta(double u, double u_bar) { return std::clamp(u - u_bar, 0.0, 1.0); }

double estimate_u_bar(const Tensor2& p, std::span<const double> u, const SeenMask& mask) {
  if (p.rows() == 0) throw ShapeError("estimate_u_bar: empty batch");
  if (u.size() != p.rows()) throw ShapeError("estimate_u_bar: uncertainty count mismatch");
  double unseen_sum = 0.0;
  double all_sum = 0.0;
  std::size_t unseen_n = 0;
  for (std::size_t j = 0; j < p.rows(); ++j) {
    all_sum += u[j];
    if (!mask.seen(argmax(p.row_span(j)))) {
      unseen_sum += u[j];
      ++unseen_n;
    }
  }
  if (unseen_n == 0) return all_sum / static_cast<double>(p.rows());
  return unseen_sum / static_cast<double>(unseen_n);
}

double CalibrationFactor::eta_for(double u) const {
  switch (mode) {
    case CalibrationMode::kNone:
      return 0.0;
    case CalibrationMode::kStatic:
      return eta;
    case CalibrationMode::kDynamic:
      return dynamic_eta(u, u_bar);
  }
  return 0.0;
}

CalibrationFactor parse_calibration(const std::string& text) {
  CalibrationFactor c;
  if (text == "none") return c;
  if (text == "dynamic") {
    c.mode = CalibrationMode::kDynamic;
    return c;
  }
  if (text.rfind("static:", 0) == 0) {
    const std::string num = text.substr(7);
    char* end = nullptr;
    const double eta = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size() || !(eta >= 0.0 && eta <= 1.0)) {
      throw ValidationError("static calibration factor must be a number in [0, 1]: '" + num + "'");
    }
    c.mode = CalibrationMode::kStatic;
    c.eta = eta;
    return c;
  }
  throw ValidationError("calibration must be none, static:ETA, or dynamic; got '" + text + "'");
}

std::string to_string(const CalibrationFactor& c) {
  switch (c.mode) {
    case CalibrationMode::kNone:
      return "none";
    case CalibrationMode::kStatic: {
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, c.eta);
      return "static:" + std::string(buf, r.ptr);
    }
    case CalibrationMode::kDynamic:
      return "dynamic";
  }
  return "none";
}

}  // namespace gzsl::calibration
