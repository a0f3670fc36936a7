#pragma once

// Three-phase training and inference:
//   1. encoder E trained with cross-entropy on seen points through a throwaway head,
//   2. decoder D (+ tuning layer) trained to mimic E's seen-class features,
//   3. classifier C and uncertainty head U trained on real seen features and
//      synthetic unseen features, E and D frozen.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gzsl/calibration.hpp"
#include "gzsl/checkpoint.hpp"
#include "gzsl/dataset.hpp"
#include "gzsl/evidential.hpp"
#include "gzsl/layers.hpp"
#include "gzsl/metrics.hpp"
#include "gzsl/optim.hpp"
#include "gzsl/synthesis.hpp"

namespace gzsl::pipeline {

struct EncoderPhaseConfig {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 32;
  std::size_t epochs = 10;
  std::size_t batch_points = 256;
  double learning_rate = 1e-3;
  optim::OptimizerKind optimizer = optim::OptimizerKind::kAdam;
};

struct DecoderPhaseConfig {
  synthesis::DecoderConfig decoder;
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  optim::OptimizerKind optimizer = optim::OptimizerKind::kAdam;
  std::size_t points_per_class = 8;
  std::size_t scenes_per_batch = 8;
  bool semantic_tuning = true;
};

struct ClassifierPhaseConfig {
  std::size_t epochs = 30;
  std::size_t batch_points = 256;
  double learning_rate = 1e-3;
  optim::OptimizerKind optimizer = optim::OptimizerKind::kAdam;
  double synth_fraction = 0.5;
  evidential::EvidentialLossWeights evidential;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  double poly_power = 0.9;
  EncoderPhaseConfig phase1;
  DecoderPhaseConfig phase2;
  ClassifierPhaseConfig phase3;

  // Throws ValidationError.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Missing fields take defaults; unknown fields are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  std::string hash() const;
  // Seed of phase k (1..3).
  std::uint64_t phase_seed(int phase) const { return seed + static_cast<std::uint64_t>(phase); }
};

struct Encoder {
  Mlp net;
  Parameter feat_mean;  // 1 x N_f, training-set statistics of net output
  Parameter feat_std;

  std::size_t input_dim() const { return net.in_dim(); }
  std::size_t feature_dim() const { return net.out_dim(); }
  // Standardized features, one row per point.
  Tensor2 features(const Tensor2& points) const;
  std::vector<const Parameter*> parameters() const;
};

struct Heads {
  Dense classifier;   // N_f -> N_c
  Dense uncertainty;  // N_f -> N_s, evidence exp(.)

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

struct ModelParameters {
  Encoder encoder;
  synthesis::Decoder decoder;
  semantics::TuningLayer tuning;
  bool semantic_tuning = true;
  Heads heads;
};

// Structured log records (one JSON object per epoch).
using Logger = std::function<void(const nlohmann::ordered_json&)>;

Encoder phase1_train_encoder(const data::Dataset& dataset, const TrainConfig& config, const Logger& log = {});

struct DecoderPhaseResult {
  synthesis::Decoder decoder;
  semantics::TuningLayer tuning;
  std::vector<synthesis::DecoderEpochLog> curve;
};
DecoderPhaseResult phase2_train_decoder(const data::Dataset& dataset, const Encoder& encoder,
                                        const TrainConfig& config, const Logger& log = {});

// Throws NumericalError if E, D or the tuning layer change during training.
Heads phase3_train_classifier(const data::Dataset& dataset, const Encoder& encoder, const synthesis::Decoder& decoder,
                              const semantics::TuningLayer& tuning, bool semantic_tuning, const TrainConfig& config,
                              const Logger& log = {});

// Checkpoint files inside a model directory.
inline constexpr const char* kEncoderFile = "encoder.ckpt";
inline constexpr const char* kDecoderFile = "decoder.ckpt";
inline constexpr const char* kClassifierFile = "classifier.ckpt";

void save_encoder(const std::filesystem::path& dir, const Encoder& encoder, const TrainConfig& config);
void save_decoder(const std::filesystem::path& dir, const synthesis::Decoder& decoder,
                  const semantics::TuningLayer& tuning, bool semantic_tuning, const TrainConfig& config);
void save_heads(const std::filesystem::path& dir, const Heads& heads, const TrainConfig& config);
Encoder load_encoder(const std::filesystem::path& dir);
DecoderPhaseResult load_decoder(const std::filesystem::path& dir, bool& semantic_tuning);
Heads load_heads(const std::filesystem::path& dir);
ModelParameters load_model(const std::filesystem::path& dir);

// Runs a phase against the checkpoints in `model_dir` and writes its own.
// Phase N requires the checkpoints of phases < N (PrerequisiteError).
void run_phase(int phase, const data::Dataset& dataset, const TrainConfig& config,
               const std::filesystem::path& model_dir, const Logger& log = {});

// Forward pass over the scenes: pre-calibration posterior and uncertainty.
metrics::Predictions predict(const ModelParameters& model, const std::vector<data::Scene>& scenes);

struct Evaluation {
  metrics::Report report;
  calibration::CalibrationFactor factor;  // u_bar filled for dynamic mode
};

// Dynamic mode estimates u_bar over the whole set (UBarScope::kDataset) or per scene.
Evaluation evaluate(const ModelParameters& model, const std::vector<data::Scene>& scenes,
                    const semantics::ClassCatalog& catalog, calibration::CalibrationFactor factor,
                    calibration::UBarScope scope = calibration::UBarScope::kDataset);

nlohmann::ordered_json report_json(const Evaluation& e, const semantics::ClassCatalog& catalog);

// Reliability, confidence histogram and per-class uncertainty summary.
nlohmann::ordered_json diagnose(const ModelParameters& model, const std::vector<data::Scene>& scenes,
                                const semantics::ClassCatalog& catalog, std::size_t n_bins = 10);

}  // namespace gzsl::pipeline
