#include "gzsl/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>

#include "gzsl/error.hpp"
#include "gzsl/kernels.hpp"

namespace gzsl::synthesis {

void DecoderConfig::validate() const {
  if (noise_dim < 1) throw ValidationError("decoder noise_dim must be >= 1");
  if (bandwidths.empty()) throw ValidationError("decoder needs at least one MMD bandwidth");
  for (double b : bandwidths) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("MMD bandwidths must be positive");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ValidationError("decoder hidden sizes must be positive");
  }
  if (!(temperature > 0.0)) throw ValidationError("contrastive temperature must be positive");
  if (!(margin >= 0.0)) throw ValidationError("prototype margin must be >= 0");
  if (!(w_disc >= 0.0) || !(w_con >= 0.0) || !(w_proto >= 0.0)) {
    throw ValidationError("decoder loss weights must be >= 0");
  }
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = nlohmann::json{{"noise_dim", c.noise_dim}, {"hidden", c.hidden},     {"bandwidths", c.bandwidths},
                     {"temperature", c.temperature}, {"margin", c.margin}, {"w_disc", c.w_disc},
                     {"w_con", c.w_con},         {"w_proto", c.w_proto}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  DecoderConfig d;
  d.noise_dim = j.value("noise_dim", d.noise_dim);
  d.hidden = j.value("hidden", d.hidden);
  d.bandwidths = j.value("bandwidths", d.bandwidths);
  d.temperature = j.value("temperature", d.temperature);
  d.margin = j.value("margin", d.margin);
  d.w_disc = j.value("w_disc", d.w_disc);
  d.w_con = j.value("w_con", d.w_con);
  d.w_proto = j.value("w_proto", d.w_proto);
  c = std::move(d);
}

namespace {

std::vector<std::size_t> decoder_dims(const DecoderConfig& config, std::size_t embedding_dim, std::size_t feature_dim) {
  std::vector<std::size_t> dims{config.noise_dim + embedding_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(feature_dim);
  return dims;
}

}  // namespace

Decoder::Decoder(const DecoderConfig& config, std::size_t embedding_dim, std::size_t feature_dim, Rng& rng)
    : config_(config), embedding_dim_(embedding_dim) {
  config_.validate();
  if (embedding_dim == 0 || feature_dim == 0) throw ShapeError("decoder dimensions must be positive");
  net_ = Mlp("decoder", decoder_dims(config_, embedding_dim, feature_dim), Activation::kRelu, rng);
}

Decoder::Decoder(const DecoderConfig& config, std::size_t embedding_dim, Mlp network)
    : config_(config), embedding_dim_(embedding_dim), net_(std::move(network)) {
  config_.validate();
  if (net_.layers().empty() || net_.in_dim() != config_.noise_dim + embedding_dim) {
    throw ShapeError("decoder network input does not match noise_dim + embedding_dim");
  }
}

void Decoder::check(std::size_t z_rows, std::size_t z_cols, std::size_t f_rows, std::size_t f_cols) const {
  if (z_cols != config_.noise_dim || f_cols != embedding_dim_ || z_rows != f_rows) {
    throw ShapeError("synthesize: noise " + std::to_string(z_rows) + "x" + std::to_string(z_cols) + ", fused " +
                     std::to_string(f_rows) + "x" + std::to_string(f_cols) + ", expected Nx" +
                     std::to_string(config_.noise_dim) + " and Nx" + std::to_string(embedding_dim_));
  }
}

Tensor2 Decoder::synthesize(const Tensor2& z, const Tensor2& fused) const {
  check(z.rows(), z.cols(), fused.rows(), fused.cols());
  return net_.apply(concat_cols(z, fused));
}

Var Decoder::synthesize(Tape& tape, Var z, Var fused) {
  check(z.rows(), z.cols(), fused.rows(), fused.cols());
  return net_.forward(tape, ad::concat_cols(z, fused));
}

Tensor2 sample_noise(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor2 z(n, dim);
  for (double& v : z.values()) v = rng.uniform();
  return z;
}

// ---------------------------------------------------------------------------
// MMD

namespace {

void check_sets(const Tensor2& x, const Tensor2& y, const char* what) {
  if (x.rows() == 0 || y.rows() == 0) throw DomainError(std::string(what) + ": empty feature set");
  if (x.cols() != y.cols()) {
    throw ShapeError(std::string(what) + ": feature dims differ, " + shape_string(x) + " vs " + shape_string(y));
  }
}

struct KernelSums {
  double k = 0.0;  // sum_s exp(-d2 / 2s^2)
  double w = 0.0;  // sum_s exp(-d2 / 2s^2) / s^2, so dk/da = -w (a - b)
};

KernelSums gaussian(double d2, std::span<const double> bandwidths) {
  KernelSums out;
  for (double s : bandwidths) {
    const double e = std::exp(-d2 / (2.0 * s * s));
    out.k += e;
    out.w += e / (s * s);
  }
  return out;
}

// Sum of k over all ordered pairs (a_i, b_j).
double kernel_block(const Tensor2& a, const Tensor2& b, std::span<const double> bandwidths) {
  const auto& kt = kernels::active();
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      total += gaussian(kt.squared_distance(a.row_span(i).data(), b.row_span(j).data(), a.cols()), bandwidths).k;
    }
  }
  return total;
}

// grad_a[i] += coef * sum_j w_ij (a_i - b_j)
void kernel_block_grad(const Tensor2& a, const Tensor2& b, std::span<const double> bandwidths, double coef,
                       Tensor2& grad_a) {
  const auto& kt = kernels::active();
  const std::size_t d = a.cols();
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row_span(i).data();
    double* gi = grad_a.row_span(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row_span(j).data();
      const double w = gaussian(kt.squared_distance(ai, bj, d), bandwidths).w;
      for (std::size_t c = 0; c < d; ++c) diff[c] = ai[c] - bj[c];
      kt.axpy(coef * w, diff.data(), gi, d);
    }
  }
}

}  // namespace

double mmd2(const Tensor2& real, const Tensor2& synth, std::span<const double> bandwidths) {
  check_sets(real, synth, "mmd2");
  const double n = static_cast<double>(real.rows());
  const double m = static_cast<double>(synth.rows());
  return kernel_block(real, real, bandwidths) / (n * n) + kernel_block(synth, synth, bandwidths) / (m * m) -
         2.0 * kernel_block(real, synth, bandwidths) / (n * m);
}

Var mmd2(Var real, Var synth, std::vector<double> bandwidths) {
  const double value = mmd2(real.value(), synth.value(), bandwidths);
  Tape& tape = *real.tape();
  return tape.record(Tensor2::scalar(value), {real, synth},
                     [real, synth, bw = std::move(bandwidths)](Tape& tp, const Tensor2& g) {
                       const Tensor2& x = real.value();
                       const Tensor2& y = synth.value();
                       const double n = static_cast<double>(x.rows());
                       const double m = static_cast<double>(y.rows());
                       const double up = g.item();
                       // d/dx_i: (1/n^2) sum_j 2 dk(x_i,x_j) - (2/nm) sum_j dk(x_i,y_j), dk/da = -w (a-b)
                       if (tp.requires_grad(real)) {
                         Tensor2 gx(x.rows(), x.cols());
                         kernel_block_grad(x, x, bw, -2.0 * up / (n * n), gx);
                         kernel_block_grad(x, y, bw, 2.0 * up / (n * m), gx);
                         tp.accumulate(real, gx);
                       }
                       if (tp.requires_grad(synth)) {
                         Tensor2 gy(y.rows(), y.cols());
                         kernel_block_grad(y, y, bw, -2.0 * up / (m * m), gy);
                         kernel_block_grad(y, x, bw, 2.0 * up / (n * m), gy);
                         tp.accumulate(synth, gy);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Contrastive

namespace {

constexpr double kNormFloor = 1e-12;

struct Normalized {
  Tensor2 unit;
  std::vector<double> norm;
};

Normalized normalize_rows(const Tensor2& x) {
  const auto& kt = kernels::active();
  Normalized out{x, std::vector<double>(x.rows())};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = out.unit.row_span(i);
    const double n = std::max(std::sqrt(kt.dot(row.data(), row.data(), row.size())), kNormFloor);
    out.norm[i] = n;
    for (double& v : row) v /= n;
  }
  return out;
}

struct ContrastiveParts {
  ContrastiveResult result;
  Tensor2 dlogits;  // d loss / d (cos / tau)
  Normalized a;
  Normalized r;
  Tensor2 cosine;
};

ContrastiveParts contrastive_parts(const Tensor2& synth, std::span<const int> synth_labels, const Tensor2& real,
                                   std::span<const int> real_labels, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("contrastive_loss: temperature must be positive");
  if (synth.rows() != synth_labels.size() || real.rows() != real_labels.size()) {
    throw ShapeError("contrastive_loss: label count does not match feature rows");
  }
  if (synth.cols() != real.cols()) throw ShapeError("contrastive_loss: feature dims differ");
  ContrastiveParts p;
  p.a = normalize_rows(synth);
  p.r = normalize_rows(real);
  p.cosine = matmul_nt(p.a.unit, p.r.unit);
  p.dlogits = Tensor2(synth.rows(), real.rows());

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < synth.rows(); ++i) {
    bool has = false;
    for (int l : real_labels) has = has || l == synth_labels[i];
    if (has) valid.push_back(i);
  }
  p.result.skipped_anchors = synth.rows() - valid.size();
  if (valid.empty()) return p;

  const double anchor_weight = 1.0 / static_cast<double>(valid.size());
  double total = 0.0;
  std::vector<double> s(real.rows());
  for (std::size_t i : valid) {
    double neg_max = -INFINITY;
    std::size_t n_pos = 0;
    for (std::size_t j = 0; j < real.rows(); ++j) {
      s[j] = p.cosine(i, j) / temperature;
      if (real_labels[j] == synth_labels[i]) {
        ++n_pos;
      } else {
        neg_max = std::max(neg_max, s[j]);
      }
    }
    const double w = anchor_weight / static_cast<double>(n_pos);
    double anchor_loss = 0.0;
    for (std::size_t pj = 0; pj < real.rows(); ++pj) {
      if (real_labels[pj] != synth_labels[i]) continue;
      // -s_p + log(exp(s_p) + sum_neg exp(s_n)), shifted for stability
      const double shift = std::max(s[pj], neg_max);
      double denom = std::exp(s[pj] - shift);
      for (std::size_t j = 0; j < real.rows(); ++j) {
        if (real_labels[j] != synth_labels[i]) denom += std::exp(s[j] - shift);
      }
      anchor_loss += -(s[pj] - shift) + std::log(denom);
      p.dlogits(i, pj) += w * (std::exp(s[pj] - shift) / denom - 1.0);
      for (std::size_t j = 0; j < real.rows(); ++j) {
        if (real_labels[j] != synth_labels[i]) p.dlogits(i, j) += w * std::exp(s[j] - shift) / denom;
      }
    }
    total += anchor_loss / static_cast<double>(n_pos);
  }
  p.result.value = total * anchor_weight;
  return p;
}

}  // namespace

ContrastiveResult contrastive_loss(const Tensor2& synth, std::span<const int> synth_labels, const Tensor2& real,
                                   std::span<const int> real_labels, double temperature) {
  return contrastive_parts(synth, synth_labels, real, real_labels, temperature).result;
}

Var contrastive_loss(Var synth, std::vector<int> synth_labels, Var real, std::vector<int> real_labels,
                     double temperature) {
  auto parts = std::make_shared<ContrastiveParts>(
      contrastive_parts(synth.value(), synth_labels, real.value(), real_labels, temperature));
  Tape& tape = *synth.tape();
  return tape.record(Tensor2::scalar(parts->result.value), {synth, real},
                     [synth, real, parts, temperature](Tape& tp, const Tensor2& g) {
                       const ContrastiveParts& p = *parts;
                       const double up = g.item() / temperature;
                       const std::size_t d = p.a.unit.cols();
                       // cos_ij = a^_i . r^_j; d cos / d a_i = (r^_j - cos_ij a^_i) / |a_i|
                       if (tp.requires_grad(synth)) {
                         Tensor2 ga(p.a.unit.rows(), d);
                         for (std::size_t i = 0; i < ga.rows(); ++i) {
                           for (std::size_t j = 0; j < p.r.unit.rows(); ++j) {
                             const double c = up * p.dlogits(i, j) / p.a.norm[i];
                             if (c == 0.0) continue;
                             for (std::size_t k = 0; k < d; ++k) {
                               ga(i, k) += c * (p.r.unit(j, k) - p.cosine(i, j) * p.a.unit(i, k));
                             }
                           }
                         }
                         tp.accumulate(synth, ga);
                       }
                       if (tp.requires_grad(real)) {
                         Tensor2 gr(p.r.unit.rows(), d);
                         for (std::size_t i = 0; i < p.a.unit.rows(); ++i) {
                           for (std::size_t j = 0; j < gr.rows(); ++j) {
                             const double c = up * p.dlogits(i, j) / p.r.norm[j];
                             if (c == 0.0) continue;
                             for (std::size_t k = 0; k < d; ++k) {
                               gr(j, k) += c * (p.a.unit(i, k) - p.cosine(i, j) * p.r.unit(j, k));
                             }
                           }
                         }
                         tp.accumulate(real, gr);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Prototype

namespace {

struct Prototypes {
  std::vector<int> classes;
  std::vector<std::vector<std::size_t>> members;
  Tensor2 mean;
};

Prototypes prototypes(const Tensor2& x, std::span<const int> labels) {
  if (x.rows() != labels.size()) throw ShapeError("prototype_loss: label count does not match feature rows");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw DomainError("prototype_loss: needs at least two classes in the batch");
  Prototypes p;
  p.mean = Tensor2(groups.size(), x.cols());
  std::size_t c = 0;
  for (auto& [label, rows] : groups) {
    auto mu = p.mean.row_span(c);
    for (std::size_t r : rows) kernels::active().add(x.row_span(r).data(), mu.data(), mu.size());
    for (double& v : mu) v /= static_cast<double>(rows.size());
    p.classes.push_back(label);
    p.members.push_back(std::move(rows));
    ++c;
  }
  return p;
}

double pair_distance(const Prototypes& p, std::size_t a, std::size_t b) {
  return std::sqrt(kernels::active().squared_distance(p.mean.row_span(a).data(), p.mean.row_span(b).data(),
                                                      p.mean.cols()));
}

}  // namespace

double prototype_loss(const Tensor2& synth, std::span<const int> labels, double margin) {
  const Prototypes p = prototypes(synth, labels);
  const std::size_t k = p.classes.size();
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) total += std::max(0.0, margin - pair_distance(p, a, b));
  }
  return total / static_cast<double>(k * (k - 1) / 2);
}

Var prototype_loss(Var synth, std::vector<int> labels, double margin) {
  const double value = prototype_loss(synth.value(), labels, margin);
  Tape& tape = *synth.tape();
  return tape.record(Tensor2::scalar(value), {synth}, [synth, labels = std::move(labels), margin](Tape& tp,
                                                                                                  const Tensor2& g) {
    const Prototypes p = prototypes(synth.value(), labels);
    const std::size_t k = p.classes.size();
    const std::size_t d = p.mean.cols();
    const double up = g.item() / static_cast<double>(k * (k - 1) / 2);
    Tensor2 gmu(k, d);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        const double dist = pair_distance(p, a, b);
        // Active hinge: d/dmu_a = -(mu_a - mu_b) / |mu_a - mu_b|; no subgradient at coincidence.
        if (!(margin - dist > 0.0) || dist == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) {
          const double u = up * (p.mean(a, c) - p.mean(b, c)) / dist;
          gmu(a, c) -= u;
          gmu(b, c) += u;
        }
      }
    }
    Tensor2 gx(synth.rows(), d);
    for (std::size_t c = 0; c < k; ++c) {
      const double inv = 1.0 / static_cast<double>(p.members[c].size());
      for (std::size_t r : p.members[c]) kernels::active().axpy(inv, gmu.row_span(c).data(), gx.row_span(r).data(), d);
    }
    tp.accumulate(synth, gx);
  });
}

// ---------------------------------------------------------------------------
// Training

void DecoderTrainOptions::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("decoder learning rate must be positive");
  if (points_per_class == 0) throw ValidationError("decoder points_per_class must be >= 1");
  if (scenes_per_batch == 0) throw ValidationError("decoder scenes_per_batch must be >= 1");
}

Tensor2 fused_embeddings(const semantics::ClassCatalog& catalog, const semantics::TuningLayer* tuning,
                         std::span<const int> labels, const Tensor2& descriptors) {
  std::vector<std::size_t> ids(labels.begin(), labels.end());
  Tensor2 t = gather_rows(catalog.embeddings(), ids);
  if (tuning == nullptr) return t;
  return semantics::tune(t, descriptors, *tuning);
}

Tensor2 descriptor_rows(std::span<const int> scene_labels, std::size_t n_classes, std::size_t n_rows) {
  std::set<std::size_t> present(scene_labels.begin(), scene_labels.end());
  const std::vector<std::size_t> ids(present.begin(), present.end());
  const auto desc = semantics::scene_descriptor(ids, n_classes).descriptor;
  Tensor2 out(n_rows, n_classes);
  for (std::size_t r = 0; r < n_rows; ++r) std::copy(desc.begin(), desc.end(), out.row_span(r).begin());
  return out;
}

Tensor2 generate(const Decoder& decoder, const semantics::TuningLayer* tuning, const semantics::ClassCatalog& catalog,
                 std::span<const int> labels, const Tensor2& descriptors, Rng& rng) {
  const Tensor2 z = sample_noise(labels.size(), decoder.noise_dim(), rng);
  return decoder.synthesize(z, fused_embeddings(catalog, tuning, labels, descriptors));
}

namespace {

// Up to `per_class` rows per class of one scene, classes in id order.
struct SceneSample {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
};

SceneSample sample_scene(const SceneFeatures& scene, std::size_t per_class, Rng& rng) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < scene.labels.size(); ++i) groups[scene.labels[i]].push_back(i);
  SceneSample out;
  for (auto& [label, rows] : groups) {
    rng.shuffle(rows);
    const std::size_t take = std::min(per_class, rows.size());
    for (std::size_t i = 0; i < take; ++i) {
      out.rows.push_back(rows[i]);
      out.labels.push_back(label);
    }
  }
  return out;
}

std::vector<std::size_t> rows_with_label(std::span<const int> labels, int label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

void check_scenes(std::span<const SceneFeatures> scenes, const semantics::ClassCatalog& catalog,
                  std::size_t feature_dim) {
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& sc = scenes[s];
    if (sc.features.rows() != sc.labels.size() || sc.features.cols() != feature_dim) {
      throw ShapeError("scene " + std::to_string(s) + ": features " + shape_string(sc.features) + " with " +
                       std::to_string(sc.labels.size()) + " labels, decoder emits " + std::to_string(feature_dim));
    }
    for (int l : sc.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= catalog.n_classes() || !catalog.is_seen(static_cast<std::size_t>(l))) {
        throw ValidationError("decoder training scene " + std::to_string(s) + " holds non-seen label " +
                              std::to_string(l));
      }
    }
  }
}

}  // namespace

double monitor_mmd(const Decoder& decoder, const semantics::TuningLayer* tuning, const semantics::ClassCatalog& catalog,
                   std::span<const SceneFeatures> scenes, std::size_t points_per_class, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  std::size_t terms = 0;
  for (const SceneFeatures& scene : scenes) {
    const SceneSample pick = sample_scene(scene, points_per_class, rng);
    if (pick.rows.empty()) continue;
    const Tensor2 real = gather_rows(scene.features, pick.rows);
    const Tensor2 desc = descriptor_rows(scene.labels, catalog.n_classes(), pick.rows.size());
    const Tensor2 synth = generate(decoder, tuning, catalog, pick.labels, desc, rng);
    for (int label : std::set<int>(pick.labels.begin(), pick.labels.end())) {
      const auto rows = rows_with_label(pick.labels, label);
      total += mmd2(gather_rows(real, rows), gather_rows(synth, rows), decoder.config().bandwidths);
      ++terms;
    }
  }
  return terms == 0 ? 0.0 : total / static_cast<double>(terms);
}

std::vector<DecoderEpochLog> train_decoder(Decoder& decoder, semantics::TuningLayer& tuning,
                                           const semantics::ClassCatalog& catalog,
                                           std::span<const SceneFeatures> scenes,
                                           const DecoderTrainOptions& options, const DecoderLogger& log) {
  options.validate();
  const DecoderConfig& cfg = decoder.config();
  if (decoder.embedding_dim() != catalog.embedding_dim()) {
    throw ShapeError("decoder embedding dim " + std::to_string(decoder.embedding_dim()) + " vs catalog " +
                     std::to_string(catalog.embedding_dim()));
  }
  if (options.semantic_tuning &&
      (tuning.embedding_dim() != catalog.embedding_dim() || tuning.n_classes() != catalog.n_classes())) {
    throw ShapeError("tuning layer does not match the class catalog");
  }
  check_scenes(scenes, catalog, decoder.feature_dim());
  const semantics::TuningLayer* tuning_ptr = options.semantic_tuning ? &tuning : nullptr;

  std::vector<Parameter*> params = decoder.parameters();
  if (options.semantic_tuning) {
    for (Parameter* p : tuning.parameters()) params.push_back(p);
  }
  auto opt = optim::make_optimizer(options.optimizer);
  Rng rng(options.seed);
  const std::uint64_t monitor_seed = options.seed ^ 0x9e3779b97f4a7c15ULL;
  const std::size_t steps_per_epoch = (scenes.size() + options.scenes_per_batch - 1) / options.scenes_per_batch;
  const std::size_t total_steps = steps_per_epoch * options.epochs;

  std::vector<DecoderEpochLog> curve;
  DecoderEpochLog start;
  start.monitor_mmd = monitor_mmd(decoder, tuning_ptr, catalog, scenes, options.points_per_class, monitor_seed);
  start.lr = options.learning_rate;
  curve.push_back(start);
  if (log) log(start);

  const Tensor2 embeddings = catalog.embeddings();
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.shuffle(order);
    DecoderEpochLog entry;
    entry.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.scenes_per_batch) {
      const std::size_t end = std::min(order.size(), begin + options.scenes_per_batch);
      std::vector<double> real_rows;
      std::vector<int> labels;
      std::vector<double> desc_rows;
      for (std::size_t k = begin; k < end; ++k) {
        const SceneFeatures& scene = scenes[order[k]];
        const SceneSample pick = sample_scene(scene, options.points_per_class, rng);
        const Tensor2 real = gather_rows(scene.features, pick.rows);
        const Tensor2 desc = descriptor_rows(scene.labels, catalog.n_classes(), pick.rows.size());
        real_rows.insert(real_rows.end(), real.values().begin(), real.values().end());
        desc_rows.insert(desc_rows.end(), desc.values().begin(), desc.values().end());
        labels.insert(labels.end(), pick.labels.begin(), pick.labels.end());
      }
      if (labels.empty()) continue;
      const std::size_t n = labels.size();
      const std::vector<std::size_t> ids(labels.begin(), labels.end());

      Tape tape;
      Var real = tape.constant(Tensor2(n, decoder.feature_dim(), std::move(real_rows)));
      Var t = tape.constant(gather_rows(embeddings, ids));
      Var fused = t;
      if (tuning_ptr != nullptr) {
        fused = semantics::tune(tape, t, tape.constant(Tensor2(n, catalog.n_classes(), std::move(desc_rows))), tuning);
      }
      Var z = tape.constant(sample_noise(n, cfg.noise_dim, rng));
      Var synth = decoder.synthesize(tape, z, fused);

      const std::set<int> classes(labels.begin(), labels.end());
      Var disc = tape.constant(Tensor2::scalar(0.0));
      for (int label : classes) {
        const auto rows = rows_with_label(labels, label);
        disc = ad::add(disc, mmd2(ad::gather_rows(real, rows), ad::gather_rows(synth, rows), cfg.bandwidths));
      }
      disc = ad::scale(disc, 1.0 / static_cast<double>(classes.size()));
      Var con = contrastive_loss(synth, labels, real, labels, cfg.temperature);
      Var proto = classes.size() >= 2 ? prototype_loss(synth, labels, cfg.margin) : tape.constant(Tensor2::scalar(0.0));
      Var total = ad::add(ad::add(ad::scale(disc, cfg.w_disc), ad::scale(con, cfg.w_con)),
                          ad::scale(proto, cfg.w_proto));
      if (!std::isfinite(total.value().item())) {
        throw NumericalError("decoder loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
      }
      optim::zero_grad(params);
      tape.backward(total);
      const double lr = optim::poly_lr(options.learning_rate, step, total_steps, options.poly_power);
      opt->step(params, lr);
      ++step;

      entry.loss += total.value().item();
      entry.disc += disc.value().item();
      entry.con += con.value().item();
      entry.proto += proto.value().item();
      entry.lr = lr;
      ++batches;
    }
    if (batches > 0) {
      const double inv = 1.0 / static_cast<double>(batches);
      entry.loss *= inv;
      entry.disc *= inv;
      entry.con *= inv;
      entry.proto *= inv;
    }
    entry.monitor_mmd = monitor_mmd(decoder, tuning_ptr, catalog, scenes, options.points_per_class, monitor_seed);
    curve.push_back(entry);
    if (log) log(entry);
  }
  return curve;
}

}  // namespace gzsl::synthesis
