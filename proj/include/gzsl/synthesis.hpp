#pragma once

// Feature generator D(z, t (x) s): an MLP over uniform noise concatenated with
// the (optionally scene-tuned) class embedding, trained on seen classes with a
// per-class multi-kernel MMD, a cosine InfoNCE term, and a prototype hinge.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gzsl/layers.hpp"
#include "gzsl/optim.hpp"
#include "gzsl/semantics.hpp"
#include "gzsl/vendor_json.hpp"

namespace gzsl::synthesis {

struct DecoderConfig {
  std::size_t noise_dim = 32;
  std::vector<std::size_t> hidden = {128, 128};
  std::vector<double> bandwidths = {1.0, 2.0, 4.0, 8.0, 16.0};
  double temperature = 0.1;
  double margin = 1.0;
  double w_disc = 1.0;
  double w_con = 1.0;
  double w_proto = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);

class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& config, std::size_t embedding_dim, std::size_t feature_dim, Rng& rng);
  Decoder(const DecoderConfig& config, std::size_t embedding_dim, Mlp network);

  // f~ = D([z ; fused]); one row per sample.
  Tensor2 synthesize(const Tensor2& z, const Tensor2& fused) const;
  Var synthesize(Tape& tape, Var z, Var fused);

  const DecoderConfig& config() const { return config_; }
  std::size_t noise_dim() const { return config_.noise_dim; }
  std::size_t embedding_dim() const { return embedding_dim_; }
  std::size_t feature_dim() const { return net_.out_dim(); }
  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }
  std::vector<Parameter*> parameters() { return net_.parameters(); }

 private:
  void check(std::size_t z_rows, std::size_t z_cols, std::size_t f_rows, std::size_t f_cols) const;

  DecoderConfig config_;
  std::size_t embedding_dim_ = 0;
  Mlp net_;
};

// n x dim noise, uniform on [0, 1).
Tensor2 sample_noise(std::size_t n, std::size_t dim, Rng& rng);

// Biased MMD^2 estimate with a sum of Gaussian kernels
// k(a, b) = sum_s exp(-|a - b|^2 / (2 s^2)). Throws on an empty set.
double mmd2(const Tensor2& real, const Tensor2& synth, std::span<const double> bandwidths);
Var mmd2(Var real, Var synth, std::vector<double> bandwidths);

// Cosine InfoNCE. Each synthetic anchor is paired with every same-class real
// sample; the denominator holds that positive and all other-class reals.
// Anchors without a positive are skipped; the result is the mean over anchors
// of the mean over their positives (0 when no anchor has a positive).
struct ContrastiveResult {
  double value = 0.0;
  std::size_t skipped_anchors = 0;
};
ContrastiveResult contrastive_loss(const Tensor2& synth, std::span<const int> synth_labels, const Tensor2& real,
                                   std::span<const int> real_labels, double temperature);
Var contrastive_loss(Var synth, std::vector<int> synth_labels, Var real, std::vector<int> real_labels,
                     double temperature);

// Mean over class pairs of max(0, margin - |mu_a - mu_b|), mu = per-class mean.
// Throws DomainError when fewer than two classes are present.
double prototype_loss(const Tensor2& synth, std::span<const int> labels, double margin);
Var prototype_loss(Var synth, std::vector<int> labels, double margin);

// Seen-class training material: encoder features of one training scene.
struct SceneFeatures {
  Tensor2 features;         // standardized encoder output, one row per point
  std::vector<int> labels;  // class ids
};

struct DecoderTrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  optim::OptimizerKind optimizer = optim::OptimizerKind::kAdam;
  double poly_power = 0.9;
  std::size_t points_per_class = 8;  // per scene and class in a batch
  std::size_t scenes_per_batch = 8;
  bool semantic_tuning = true;
  std::uint64_t seed = 2;

  void validate() const;
};

struct DecoderEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double disc = 0.0;
  double con = 0.0;
  double proto = 0.0;
  double monitor_mmd = 0.0;
  double lr = 0.0;
};

// Fused decoder conditioning, one row per label: t, or t (x) s when `tuning`
// is non-null. `descriptors` holds one scene descriptor row per label.
Tensor2 fused_embeddings(const semantics::ClassCatalog& catalog, const semantics::TuningLayer* tuning,
                         std::span<const int> labels, const Tensor2& descriptors);

// Scene descriptor of a label list, tiled to one row per entry of `labels`.
Tensor2 descriptor_rows(std::span<const int> scene_labels, std::size_t n_classes, std::size_t n_rows);

// Mean per-(scene, class) MMD between real seen features and features generated
// from a fixed noise stream. Tracks decoder training.
double monitor_mmd(const Decoder& decoder, const semantics::TuningLayer* tuning, const semantics::ClassCatalog& catalog,
                   std::span<const SceneFeatures> scenes, std::size_t points_per_class, std::uint64_t seed);

using DecoderLogger = std::function<void(const DecoderEpochLog&)>;

// Optimizes the decoder, and the tuning layer when options.semantic_tuning, in
// place. Entry 0 of the returned curve describes the untrained state.
// Throws NumericalError naming the epoch and step if the loss turns non-finite.
std::vector<DecoderEpochLog> train_decoder(Decoder& decoder, semantics::TuningLayer& tuning,
                                           const semantics::ClassCatalog& catalog,
                                           std::span<const SceneFeatures> scenes,
                                           const DecoderTrainOptions& options, const DecoderLogger& log = {});

// Synthetic features for `labels`, descriptor rows as in fused_embeddings().
Tensor2 generate(const Decoder& decoder, const semantics::TuningLayer* tuning, const semantics::ClassCatalog& catalog,
                 std::span<const int> labels, const Tensor2& descriptors, Rng& rng);

}  // namespace gzsl::synthesis
