#include "gzsl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gzsl/error.hpp"
#include "gzsl/io.hpp"

namespace gzsl::pipeline {

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError(where + ": unknown field '" + key + "'");
    }
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_optimizer(const nlohmann::json& j, optim::OptimizerKind& out) {
  if (j.contains("optimizer")) out = optim::parse_optimizer(j.at("optimizer").get<std::string>());
}

std::string orientation_name(evidential::BlOrientation o) {
  return o == evidential::BlOrientation::kTextualIntent ? "textual-intent" : "as-printed";
}

evidential::BlOrientation parse_orientation(const std::string& s) {
  if (s == "textual-intent") return evidential::BlOrientation::kTextualIntent;
  if (s == "as-printed") return evidential::BlOrientation::kAsPrinted;
  throw ValidationError("bl_orientation must be 'textual-intent' or 'as-printed', got '" + s + "'");
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + " must be positive");
  };
  positive(phase1.learning_rate, "phase1.learning_rate");
  positive(phase2.learning_rate, "phase2.learning_rate");
  positive(phase3.learning_rate, "phase3.learning_rate");
  positive(poly_power, "poly_power");
  if (phase1.batch_points < 1 || phase3.batch_points < 1) throw ValidationError("batch_points must be >= 1");
  if (phase1.feature_dim < 1) throw ValidationError("phase1.feature_dim must be >= 1");
  for (std::size_t h : phase1.hidden) {
    if (h == 0) throw ValidationError("phase1.hidden sizes must be positive");
  }
  if (phase2.points_per_class < 1 || phase2.scenes_per_batch < 1) {
    throw ValidationError("phase2.points_per_class and scenes_per_batch must be >= 1");
  }
  phase2.decoder.validate();
  if (!(phase3.synth_fraction >= 0.0 && phase3.synth_fraction < 1.0)) {
    throw ValidationError("phase3.synth_fraction must lie in [0, 1)");
  }
  try {
    phase3.evidential.validate();
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["poly_power"] = poly_power;
  auto& p1 = j["phase1"];
  p1["hidden"] = phase1.hidden;
  p1["feature_dim"] = phase1.feature_dim;
  p1["epochs"] = phase1.epochs;
  p1["batch_points"] = phase1.batch_points;
  p1["learning_rate"] = phase1.learning_rate;
  p1["optimizer"] = optim::to_string(phase1.optimizer);
  auto& p2 = j["phase2"];
  nlohmann::json dec = phase2.decoder;
  p2["decoder"] = nlohmann::ordered_json::parse(dec.dump());
  p2["epochs"] = phase2.epochs;
  p2["learning_rate"] = phase2.learning_rate;
  p2["optimizer"] = optim::to_string(phase2.optimizer);
  p2["points_per_class"] = phase2.points_per_class;
  p2["scenes_per_batch"] = phase2.scenes_per_batch;
  p2["semantic_tuning"] = phase2.semantic_tuning;
  auto& p3 = j["phase3"];
  p3["epochs"] = phase3.epochs;
  p3["batch_points"] = phase3.batch_points;
  p3["learning_rate"] = phase3.learning_rate;
  p3["optimizer"] = optim::to_string(phase3.optimizer);
  p3["synth_fraction"] = phase3.synth_fraction;
  p3["lambda_dl"] = phase3.evidential.lambda_dl;
  p3["lambda_bl"] = phase3.evidential.lambda_bl;
  p3["bl_orientation"] = orientation_name(phase3.evidential.bl_orientation);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    reject_unknown(j, {"seed", "poly_power", "phase1", "phase2", "phase3"}, "config");
    read(j, "seed", c.seed);
    read(j, "poly_power", c.poly_power);
    if (j.contains("phase1")) {
      const auto& p = j.at("phase1");
      reject_unknown(p, {"hidden", "feature_dim", "epochs", "batch_points", "learning_rate", "optimizer"}, "phase1");
      read(p, "hidden", c.phase1.hidden);
      read(p, "feature_dim", c.phase1.feature_dim);
      read(p, "epochs", c.phase1.epochs);
      read(p, "batch_points", c.phase1.batch_points);
      read(p, "learning_rate", c.phase1.learning_rate);
      read_optimizer(p, c.phase1.optimizer);
    }
    if (j.contains("phase2")) {
      const auto& p = j.at("phase2");
      reject_unknown(p,
                     {"decoder", "epochs", "learning_rate", "optimizer", "points_per_class", "scenes_per_batch",
                      "semantic_tuning"},
                     "phase2");
      if (p.contains("decoder")) {
        reject_unknown(p.at("decoder"),
                       {"noise_dim", "hidden", "bandwidths", "temperature", "margin", "w_disc", "w_con", "w_proto"},
                       "phase2.decoder");
        c.phase2.decoder = p.at("decoder").get<synthesis::DecoderConfig>();
      }
      read(p, "epochs", c.phase2.epochs);
      read(p, "learning_rate", c.phase2.learning_rate);
      read_optimizer(p, c.phase2.optimizer);
      read(p, "points_per_class", c.phase2.points_per_class);
      read(p, "scenes_per_batch", c.phase2.scenes_per_batch);
      read(p, "semantic_tuning", c.phase2.semantic_tuning);
    }
    if (j.contains("phase3")) {
      const auto& p = j.at("phase3");
      reject_unknown(p,
                     {"epochs", "batch_points", "learning_rate", "optimizer", "synth_fraction", "lambda_dl",
                      "lambda_bl", "bl_orientation"},
                     "phase3");
      read(p, "epochs", c.phase3.epochs);
      read(p, "batch_points", c.phase3.batch_points);
      read(p, "learning_rate", c.phase3.learning_rate);
      read_optimizer(p, c.phase3.optimizer);
      read(p, "synth_fraction", c.phase3.synth_fraction);
      read(p, "lambda_dl", c.phase3.evidential.lambda_dl);
      read(p, "lambda_bl", c.phase3.evidential.lambda_bl);
      if (p.contains("bl_orientation")) {
        c.phase3.evidential.bl_orientation = parse_orientation(p.at("bl_orientation").get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

std::string TrainConfig::hash() const { return io::hex64(io::fnv1a64(to_json().dump())); }

// ---------------------------------------------------------------------------
// Model pieces

Tensor2 Encoder::features(const Tensor2& points) const {
  if (points.cols() != input_dim()) {
    throw ShapeError("encoder expects " + std::to_string(input_dim()) + " input channels, got " +
                     std::to_string(points.cols()));
  }
  Tensor2 f = net.apply(points);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto row = f.row_span(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - feat_mean.value(0, c)) / feat_std.value(0, c);
  }
  return f;
}

std::vector<const Parameter*> Encoder::parameters() const {
  auto p = net.parameters();
  p.push_back(&feat_mean);
  p.push_back(&feat_std);
  return p;
}

std::vector<Parameter*> Heads::parameters() {
  return {&classifier.weight, &classifier.bias, &uncertainty.weight, &uncertainty.bias};
}

std::vector<const Parameter*> Heads::parameters() const {
  return {&classifier.weight, &classifier.bias, &uncertainty.weight, &uncertainty.bias};
}

namespace {

void require_seen_only(const data::Dataset& d) {
  for (const auto& s : d.train) {
    for (int l : s.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= d.catalog.n_classes() ||
          !d.catalog.is_seen(static_cast<std::size_t>(l))) {
        throw ValidationError("training scene " + s.scene_id + " holds label " + std::to_string(l) +
                              ", which is not a seen class");
      }
    }
  }
  if (d.train.empty()) throw ValidationError("training split is empty");
}

void require_finite_loss(double v, int phase, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError("phase " + std::to_string(phase) + " loss is not finite at epoch " + std::to_string(epoch) +
                         ", step " + std::to_string(step));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Phase I

Encoder phase1_train_encoder(const data::Dataset& dataset, const TrainConfig& config, const Logger& log) {
  config.validate();
  require_seen_only(dataset);
  const auto& cat = dataset.catalog;
  const std::size_t in_dim = dataset.train.front().points.cols();

  std::vector<double> flat;
  std::vector<int> seen_idx;
  for (const auto& s : dataset.train) {
    if (s.points.cols() != in_dim) throw ValidationError("scene " + s.scene_id + " has a different point width");
    flat.insert(flat.end(), s.points.values().begin(), s.points.values().end());
    for (int l : s.labels) seen_idx.push_back(static_cast<int>(cat.seen_index(static_cast<std::size_t>(l))));
  }
  const Tensor2 points(seen_idx.size(), in_dim, std::move(flat));

  Rng rng(config.phase_seed(1));
  std::vector<std::size_t> dims{in_dim};
  dims.insert(dims.end(), config.phase1.hidden.begin(), config.phase1.hidden.end());
  dims.push_back(config.phase1.feature_dim);
  Encoder enc;
  enc.net = Mlp("encoder", dims, Activation::kRelu, rng);
  Dense head("seen_head", config.phase1.feature_dim, cat.n_seen(), rng);

  std::vector<Parameter*> params = enc.net.parameters();
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  auto opt = optim::make_optimizer(config.phase1.optimizer);
  const std::size_t n = points.rows();
  const std::size_t nb = config.phase1.batch_points;
  const std::size_t steps_per_epoch = (n + nb - 1) / nb;
  const std::size_t total = steps_per_epoch * config.phase1.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.phase1.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += nb) {
      const std::size_t end = std::min(n, begin + nb);
      std::vector<std::size_t> rows(order.begin() + begin, order.begin() + end);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(seen_idx[r]);
      Tape tape;
      Var logits = head.forward(tape, enc.net.forward(tape, tape.constant(gather_rows(points, rows))));
      Var loss = calibration::softmax_cross_entropy(logits, labels);
      require_finite_loss(loss.value().item(), 1, epoch, step);
      optim::zero_grad(params);
      tape.backward(loss);
      opt->step(params, optim::poly_lr(config.phase1.learning_rate, step, total, config.poly_power));
      ++step;
      loss_sum += loss.value().item() * static_cast<double>(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(calibration::argmax(logits.value().row_span(i))) == labels[i]) ++correct;
      }
    }
    if (log) {
      nlohmann::ordered_json e;
      e["phase"] = 1;
      e["epoch"] = epoch;
      e["ce"] = loss_sum / static_cast<double>(n);
      e["train_accuracy"] = static_cast<double>(correct) / static_cast<double>(n);
      log(e);
    }
  }

  // Standardization statistics over the training points.
  const Tensor2 raw = enc.net.apply(points);
  const std::size_t nf = raw.cols();
  Tensor2 mean(1, nf), sd(1, nf);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t c = 0; c < nf; ++c) mean(0, c) += raw(i, c);
  }
  for (std::size_t c = 0; c < nf; ++c) mean(0, c) /= static_cast<double>(raw.rows());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t c = 0; c < nf; ++c) sd(0, c) += (raw(i, c) - mean(0, c)) * (raw(i, c) - mean(0, c));
  }
  for (std::size_t c = 0; c < nf; ++c) sd(0, c) = std::max(std::sqrt(sd(0, c) / static_cast<double>(raw.rows())), 1e-6);
  enc.feat_mean = Parameter("encoder.feat_mean", std::move(mean));
  enc.feat_std = Parameter("encoder.feat_std", std::move(sd));
  return enc;
}

// ---------------------------------------------------------------------------
// Phase II

namespace {

std::vector<synthesis::SceneFeatures> scene_features(const std::vector<data::Scene>& scenes, const Encoder& enc) {
  std::vector<synthesis::SceneFeatures> out;
  for (const auto& s : scenes) out.push_back({enc.features(s.points), s.labels});
  return out;
}

}  // namespace

DecoderPhaseResult phase2_train_decoder(const data::Dataset& dataset, const Encoder& encoder,
                                        const TrainConfig& config, const Logger& log) {
  config.validate();
  require_seen_only(dataset);
  const auto& cat = dataset.catalog;
  const auto features = scene_features(dataset.train, encoder);
  Rng rng(config.phase_seed(2));
  DecoderPhaseResult r;
  r.decoder = synthesis::Decoder(config.phase2.decoder, cat.embedding_dim(), encoder.feature_dim(), rng);
  r.tuning = semantics::TuningLayer::initialized(cat.embedding_dim(), cat.n_classes(), rng);

  synthesis::DecoderTrainOptions opt;
  opt.epochs = config.phase2.epochs;
  opt.learning_rate = config.phase2.learning_rate;
  opt.optimizer = config.phase2.optimizer;
  opt.poly_power = config.poly_power;
  opt.points_per_class = config.phase2.points_per_class;
  opt.scenes_per_batch = config.phase2.scenes_per_batch;
  opt.semantic_tuning = config.phase2.semantic_tuning;
  opt.seed = splitmix(config.phase_seed(2));
  synthesis::DecoderLogger dlog;
  if (log) {
    dlog = [&](const synthesis::DecoderEpochLog& e) {
      nlohmann::ordered_json j;
      j["phase"] = 2;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["mmd"] = e.disc;
      j["contrastive"] = e.con;
      j["prototype"] = e.proto;
      j["monitor_mmd"] = e.monitor_mmd;
      j["lr"] = e.lr;
      log(j);
    };
  }
  r.curve = synthesis::train_decoder(r.decoder, r.tuning, cat, features, opt, dlog);
  return r;
}

// ---------------------------------------------------------------------------
// Phase III

Heads phase3_train_classifier(const data::Dataset& dataset, const Encoder& encoder, const synthesis::Decoder& decoder,
                              const semantics::TuningLayer& tuning, bool semantic_tuning, const TrainConfig& config,
                              const Logger& log) {
  config.validate();
  require_seen_only(dataset);
  const auto& cat = dataset.catalog;
  const auto& pc = config.phase3;
  if (decoder.feature_dim() != encoder.feature_dim()) {
    throw ShapeError("decoder emits " + std::to_string(decoder.feature_dim()) + " features, encoder " +
                     std::to_string(encoder.feature_dim()));
  }
  auto frozen = [&] {
    auto p = encoder.parameters();
    for (const Parameter* q : decoder.network().parameters()) p.push_back(q);
    for (const Parameter* q : tuning.parameters()) p.push_back(q);
    return ckpt::parameter_checksum(p);
  };
  const std::string before = frozen();

  const auto features = scene_features(dataset.train, encoder);
  Rng rng(config.phase_seed(3));
  Heads h{Dense("classifier", encoder.feature_dim(), cat.n_classes(), rng),
          Dense("uncertainty", encoder.feature_dim(), cat.n_seen(), rng)};
  std::vector<Parameter*> params = h.parameters();
  auto opt = optim::make_optimizer(pc.optimizer);
  const semantics::TuningLayer* tuning_ptr = semantic_tuning ? &tuning : nullptr;

  const std::size_t n_synth =
      cat.n_unseen() == 0 ? 0 : static_cast<std::size_t>(std::llround(pc.synth_fraction * pc.batch_points));
  const std::size_t n_real = pc.batch_points - n_synth;
  const std::size_t total = features.size() * pc.epochs;
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& unseen = cat.unseen_ids();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= pc.epochs; ++epoch) {
    rng.shuffle(order);
    double ce_sum = 0.0, ev_sum = 0.0, sl_sum = 0.0, dl_sum = 0.0, bl_sum = 0.0;
    for (std::size_t si : order) {
      const auto& scene = features[si];
      std::vector<std::size_t> rows(n_real);
      for (std::size_t& r : rows) r = rng.index(scene.labels.size());
      std::vector<int> labels, targets;
      for (std::size_t r : rows) {
        labels.push_back(scene.labels[r]);
        targets.push_back(static_cast<int>(cat.seen_index(static_cast<std::size_t>(scene.labels[r]))));
      }
      Tensor2 x = gather_rows(scene.features, rows);
      if (n_synth > 0) {
        std::vector<int> synth_labels(n_synth);
        const std::size_t offset = rng.index(unseen.size());
        for (std::size_t k = 0; k < n_synth; ++k) synth_labels[k] = static_cast<int>(unseen[(offset + k) % unseen.size()]);
        // The descriptor marks the scene's seen classes and the unseen classes synthesized into it.
        std::vector<int> present(scene.labels.begin(), scene.labels.end());
        present.insert(present.end(), synth_labels.begin(), synth_labels.end());
        const Tensor2 desc = synthesis::descriptor_rows(present, cat.n_classes(), n_synth);
        const Tensor2 synth = synthesis::generate(decoder, tuning_ptr, cat, synth_labels, desc, rng);
        Tensor2 joined(x.rows() + synth.rows(), x.cols());
        std::copy(x.values().begin(), x.values().end(), joined.values().begin());
        std::copy(synth.values().begin(), synth.values().end(), joined.values().begin() + x.size());
        x = std::move(joined);
        labels.insert(labels.end(), synth_labels.begin(), synth_labels.end());
        targets.insert(targets.end(), n_synth, evidential::kUnseen);
      }
      Tape tape;
      Var xv = tape.constant(std::move(x));
      Var ce = calibration::softmax_cross_entropy(h.classifier.forward(tape, xv), labels);
      Var alpha = evidential::evidence_from_logits(h.uncertainty.forward(tape, xv));
      auto ev = evidential::loss_ev(alpha, targets, pc.evidential);
      Var loss = ad::add(ce, ev.total);
      require_finite_loss(loss.value().item(), 3, epoch, step);
      optim::zero_grad(params);
      tape.backward(loss);
      opt->step(params, optim::poly_lr(pc.learning_rate, step, total, config.poly_power));
      ++step;
      ce_sum += ce.value().item();
      ev_sum += ev.terms.total;
      sl_sum += ev.terms.sl;
      dl_sum += ev.terms.dl;
      bl_sum += ev.terms.bl;
    }
    if (log) {
      const double inv = features.empty() ? 0.0 : 1.0 / static_cast<double>(features.size());
      nlohmann::ordered_json e;
      e["phase"] = 3;
      e["epoch"] = epoch;
      e["ce"] = ce_sum * inv;
      e["ev"] = ev_sum * inv;
      e["sl"] = sl_sum * inv;
      e["dl"] = dl_sum * inv;
      e["bl"] = bl_sum * inv;
      log(e);
    }
  }
  if (frozen() != before) throw NumericalError("phase 3 modified the frozen encoder or decoder");
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::ordered_json meta(const char* kind, const TrainConfig& config) {
  nlohmann::ordered_json m;
  m["kind"] = kind;
  m["seed"] = config.seed;
  m["config_hash"] = config.hash();
  m["config"] = config.to_json();
  return m;
}

std::vector<std::size_t> dims_of(const nlohmann::ordered_json& m, const char* key) {
  return m.at(key).get<std::vector<std::size_t>>();
}

Mlp mlp_from(const ckpt::Checkpoint& c, const std::string& name, const std::vector<std::size_t>& dims) {
  Rng dummy(0);
  Mlp net(name, dims, Activation::kRelu, dummy);
  for (Parameter* p : net.parameters()) c.load_into(*p);
  return net;
}

ckpt::Checkpoint read_kind(const std::filesystem::path& path, const char* kind) {
  ckpt::Checkpoint c = ckpt::read(path);
  if (c.meta.value("kind", "") != kind) throw ValidationError(path.string() + " is not a " + kind + " checkpoint");
  return c;
}

}  // namespace

void save_encoder(const std::filesystem::path& dir, const Encoder& encoder, const TrainConfig& config) {
  auto m = meta("encoder", config);
  m["dims"] = encoder.net.dims();
  ckpt::write(dir / kEncoderFile, m, encoder.parameters());
}

void save_decoder(const std::filesystem::path& dir, const synthesis::Decoder& decoder,
                  const semantics::TuningLayer& tuning, bool semantic_tuning, const TrainConfig& config) {
  auto m = meta("decoder", config);
  m["dims"] = decoder.network().dims();
  m["embedding_dim"] = decoder.embedding_dim();
  m["n_classes"] = tuning.n_classes();
  m["semantic_tuning"] = semantic_tuning;
  nlohmann::json dc = decoder.config();
  m["decoder"] = nlohmann::ordered_json::parse(dc.dump());
  auto params = decoder.network().parameters();
  for (const Parameter* p : tuning.parameters()) params.push_back(p);
  ckpt::write(dir / kDecoderFile, m, params);
}

void save_heads(const std::filesystem::path& dir, const Heads& heads, const TrainConfig& config) {
  auto m = meta("classifier", config);
  m["feature_dim"] = heads.classifier.in_dim();
  m["n_classes"] = heads.classifier.out_dim();
  m["n_seen"] = heads.uncertainty.out_dim();
  ckpt::write(dir / kClassifierFile, m, heads.parameters());
}

Encoder load_encoder(const std::filesystem::path& dir) {
  const auto c = read_kind(dir / kEncoderFile, "encoder");
  try {
    Encoder e;
    e.net = mlp_from(c, "encoder", dims_of(c.meta, "dims"));
    e.feat_mean = Parameter("encoder.feat_mean", Tensor2(1, e.net.out_dim()));
    e.feat_std = Parameter("encoder.feat_std", Tensor2(1, e.net.out_dim()));
    c.load_into(e.feat_mean);
    c.load_into(e.feat_std);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError((dir / kEncoderFile).string() + ": " + ex.what());
  }
}

DecoderPhaseResult load_decoder(const std::filesystem::path& dir, bool& semantic_tuning) {
  const auto c = read_kind(dir / kDecoderFile, "decoder");
  try {
    DecoderPhaseResult r;
    const auto cfg = nlohmann::json::parse(c.meta.at("decoder").dump()).get<synthesis::DecoderConfig>();
    const auto nt = c.meta.at("embedding_dim").get<std::size_t>();
    const auto nc = c.meta.at("n_classes").get<std::size_t>();
    r.decoder = synthesis::Decoder(cfg, nt, mlp_from(c, "decoder", dims_of(c.meta, "dims")));
    r.tuning = semantics::TuningLayer(Tensor2(nt, nc), Tensor2(1, nt));
    for (Parameter* p : r.tuning.parameters()) c.load_into(*p);
    semantic_tuning = c.meta.at("semantic_tuning").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError((dir / kDecoderFile).string() + ": " + ex.what());
  }
}

Heads load_heads(const std::filesystem::path& dir) {
  const auto c = read_kind(dir / kClassifierFile, "classifier");
  try {
    const auto nf = c.meta.at("feature_dim").get<std::size_t>();
    const auto nc = c.meta.at("n_classes").get<std::size_t>();
    const auto ns = c.meta.at("n_seen").get<std::size_t>();
    Rng dummy(0);
    Heads h{Dense("classifier", nf, nc, dummy), Dense("uncertainty", nf, ns, dummy)};
    for (Parameter* p : h.parameters()) c.load_into(*p);
    return h;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError((dir / kClassifierFile).string() + ": " + ex.what());
  }
}

ModelParameters load_model(const std::filesystem::path& dir) {
  ModelParameters m;
  m.encoder = load_encoder(dir);
  auto d = load_decoder(dir, m.semantic_tuning);
  m.decoder = std::move(d.decoder);
  m.tuning = std::move(d.tuning);
  m.heads = load_heads(dir);
  if (m.heads.classifier.in_dim() != m.encoder.feature_dim()) {
    throw ValidationError("classifier and encoder checkpoints disagree on the feature dimension");
  }
  return m;
}

void run_phase(int phase, const data::Dataset& dataset, const TrainConfig& config,
               const std::filesystem::path& model_dir, const Logger& log) {
  switch (phase) {
    case 1:
      save_encoder(model_dir, phase1_train_encoder(dataset, config, log), config);
      return;
    case 2: {
      const Encoder enc = load_encoder(model_dir);
      const auto r = phase2_train_decoder(dataset, enc, config, log);
      save_decoder(model_dir, r.decoder, r.tuning, config.phase2.semantic_tuning, config);
      return;
    }
    case 3: {
      const Encoder enc = load_encoder(model_dir);
      bool tuned = true;
      const auto d = load_decoder(model_dir, tuned);
      save_heads(model_dir, phase3_train_classifier(dataset, enc, d.decoder, d.tuning, tuned, config, log), config);
      return;
    }
    default:
      throw ValidationError("phase must be 1, 2 or 3");
  }
}

// ---------------------------------------------------------------------------
// Inference

metrics::Predictions predict(const ModelParameters& model, const std::vector<data::Scene>& scenes) {
  metrics::Predictions out;
  std::vector<double> p_flat;
  std::size_t n_classes = model.heads.classifier.out_dim();
  for (const auto& s : scenes) {
    const Tensor2 f = model.encoder.features(s.points);
    const Tensor2 p = calibration::softmax_posterior(model.heads.classifier.apply(f));
    const auto u = evidential::uncertainty(evidential::evidence_from_logits(model.heads.uncertainty.apply(f)));
    p_flat.insert(p_flat.end(), p.values().begin(), p.values().end());
    out.u.insert(out.u.end(), u.begin(), u.end());
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  out.p = Tensor2(out.labels.size(), n_classes, std::move(p_flat));
  return out;
}

Evaluation evaluate(const ModelParameters& model, const std::vector<data::Scene>& scenes,
                    const semantics::ClassCatalog& catalog, calibration::CalibrationFactor factor,
                    calibration::UBarScope scope) {
  const auto mask = catalog.seen_mask();
  if (model.heads.classifier.out_dim() != catalog.n_classes()) {
    throw ValidationError("model predicts " + std::to_string(model.heads.classifier.out_dim()) +
                          " classes, catalog has " + std::to_string(catalog.n_classes()));
  }
  for (const auto& s : scenes) {
    for (int l : s.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= catalog.n_classes()) {
        throw ValidationError("scene " + s.scene_id + " holds label " + std::to_string(l) + " outside the catalog");
      }
    }
  }
  if (scenes.empty()) throw ValidationError("evaluation split is empty");
  Evaluation e;
  metrics::ConfusionMatrix cm(catalog.n_classes());
  if (factor.mode == calibration::CalibrationMode::kDynamic && scope == calibration::UBarScope::kPerScene) {
    for (const auto& s : scenes) {
      const auto pred = predict(model, {s});
      calibration::CalibrationFactor f = factor;
      f.u_bar = calibration::estimate_u_bar(pred.p, pred.u, mask);
      cm.merge(metrics::confusion(pred, mask, f));
    }
  } else {
    const auto pred = predict(model, scenes);
    if (factor.mode == calibration::CalibrationMode::kDynamic) {
      factor.u_bar = calibration::estimate_u_bar(pred.p, pred.u, mask);
    }
    cm = metrics::confusion(pred, mask, factor);
  }
  e.factor = factor;
  e.report = metrics::summarize(cm, mask);
  return e;
}

nlohmann::ordered_json report_json(const Evaluation& e, const semantics::ClassCatalog& catalog) {
  std::vector<std::string> names;
  for (const auto& c : catalog.classes()) names.push_back(c.name);
  nlohmann::ordered_json j = e.report.to_json(names);
  if (e.factor.mode == calibration::CalibrationMode::kDynamic) j["u_bar"] = e.factor.u_bar;
  j["points"] = e.report.confusion.total();
  return j;
}

nlohmann::ordered_json diagnose(const ModelParameters& model, const std::vector<data::Scene>& scenes,
                                const semantics::ClassCatalog& catalog, std::size_t n_bins) {
  const auto pred = predict(model, scenes);
  const auto mask = catalog.seen_mask();
  nlohmann::ordered_json j;
  j["reliability"] = metrics::reliability(pred.p, pred.labels, n_bins).to_json();
  const auto report = metrics::summarize(
      metrics::confusion(pred, mask, calibration::CalibrationFactor{}), mask);
  std::vector<double> u_sum(catalog.n_classes(), 0.0);
  std::vector<std::size_t> count(catalog.n_classes(), 0);
  double seen_sum = 0.0, unseen_sum = 0.0;
  std::size_t seen_n = 0, unseen_n = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(pred.labels[i]);
    u_sum[c] += pred.u[i];
    ++count[c];
    if (mask.seen(c)) {
      seen_sum += pred.u[i];
      ++seen_n;
    } else {
      unseen_sum += pred.u[i];
      ++unseen_n;
    }
  }
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < catalog.n_classes(); ++c) {
    nlohmann::ordered_json e;
    e["name"] = catalog.at(c).name;
    e["seen"] = catalog.at(c).seen;
    e["points"] = count[c];
    e["mean_u"] = count[c] == 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(u_sum[c] / count[c]);
    e["iou"] = std::isnan(report.class_iou[c]) ? nlohmann::ordered_json(nullptr)
                                               : nlohmann::ordered_json(report.class_iou[c]);
    classes.push_back(std::move(e));
  }
  j["classes"] = std::move(classes);
  const double ms = seen_n == 0 ? 0.0 : seen_sum / static_cast<double>(seen_n);
  const double mu = unseen_n == 0 ? 0.0 : unseen_sum / static_cast<double>(unseen_n);
  j["mean_u_seen"] = ms;
  j["mean_u_unseen"] = mu;
  j["u_gap"] = mu - ms;
  j["u_bar"] = calibration::estimate_u_bar(pred.p, pred.u, mask);
  return j;
}

}  // namespace gzsl::pipeline
