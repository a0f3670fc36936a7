#include "gzsl/app.hpp"

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gzsl/benchgen.hpp"
#include "gzsl/error.hpp"
#include "gzsl/io.hpp"
#include "gzsl/kernels.hpp"
#include "gzsl/pipeline.hpp"

namespace gzsl::app {

namespace fs = std::filesystem;

namespace {

nlohmann::ordered_json read_json_file(const fs::path& path) {
  try {
    return nlohmann::ordered_json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// manifest.json in `dir`: merged with what is already there, every listed
// artifact carries its content hash.
void update_manifest(const fs::path& dir, const nlohmann::ordered_json& fields,
                     const std::vector<std::pair<std::string, fs::path>>& artifacts) {
  const fs::path path = dir / "manifest.json";
  nlohmann::ordered_json m = fs::exists(path) ? read_json_file(path) : nlohmann::ordered_json::object();
  m["tool_version"] = kToolVersion;
  for (const auto& [k, v] : fields.items()) m[k] = v;
  for (const auto& [key, file] : artifacts) {
    m["artifacts"][key] = {{"path", file.filename().string()}, {"hash", io::file_hash(file)}};
  }
  io::write_atomic(path, m.dump(2) + "\n");
}

nlohmann::ordered_json dataset_fields(const fs::path& data_dir) {
  nlohmann::ordered_json d;
  d["path"] = data_dir.string();
  for (const char* f : {data::kTrainFile, data::kEvalFile, data::kClassesFile}) d["hashes"][f] = io::file_hash(data_dir / f);
  return d;
}

// Streams per-epoch records to `<path>.tmp` and renames on close.
class JsonlLog {
 public:
  explicit JsonlLog(fs::path path) : path_(std::move(path)), tmp_(path_) {
    tmp_ += ".tmp";
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw ValidationError("cannot write " + tmp_.string());
  }
  void operator()(const nlohmann::ordered_json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }
  void commit() {
    out_.close();
    fs::rename(tmp_, path_);
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

pipeline::TrainConfig load_config(const std::string& path) {
  if (path.empty()) return pipeline::TrainConfig{};
  return pipeline::TrainConfig::from_json(read_json_file(path));
}

data::Dataset load_validated(const fs::path& dir) {
  data::Dataset d = data::load_dataset(dir);
  const auto report = benchgen::validate(d);
  if (!report.ok()) {
    std::string msg = "dataset " + dir.string() + " failed validation:";
    for (const auto& v : report.violations) msg += "\n  " + v.code + ": " + v.detail;
    throw ValidationError(msg);
  }
  return d;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Evidence-based dynamic calibration for generalized zero-shot segmentation"};
  cli.require_subcommand(1);
  std::string kernels_name;
  cli.add_option("--kernels", kernels_name, "Kernel variant: scalar, avx2, neon");

  std::string spec_path, out_path, config_path, data_dir, model_dir, calibration = "none", grid = "0:1:0.02",
                                                                       scope = "dataset";
  int phase = 0;
  bool print_config = false;
  std::size_t bins = 10;

  auto* gen = cli.add_subcommand("gen-data", "Generate and validate a synthetic benchmark");
  gen->add_option("--spec", spec_path, "Benchmark spec JSON (defaults when omitted)");
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* train = cli.add_subcommand("train", "Run one training phase");
  train->add_option("--phase", phase, "1, 2 or 3")->check(CLI::Range(1, 3));
  train->add_option("--config", config_path, "Training config JSON (defaults when omitted)");
  train->add_option("--data", data_dir, "Dataset directory");
  train->add_option("--out", out_path, "Model directory");
  train->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* eval = cli.add_subcommand("eval", "Evaluate a trained model");
  eval->add_option("--model", model_dir, "Model directory")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--calibration", calibration, "none | static:ETA | dynamic");
  eval->add_option("--u-bar-scope", scope, "dataset | per-scene")->check(CLI::IsMember({"dataset", "per-scene"}));
  eval->add_option("--out", out_path, "Report JSON")->required();

  auto* sweep = cli.add_subcommand("sweep-eta", "Metrics over a grid of static calibration factors");
  sweep->add_option("--model", model_dir, "Model directory")->required();
  sweep->add_option("--data", data_dir, "Dataset directory")->required();
  sweep->add_option("--grid", grid, "lo:hi:step");
  sweep->add_option("--out", out_path, "CSV (or .json) output")->required();

  auto* diag = cli.add_subcommand("diagnose", "Reliability diagram and uncertainty summary");
  diag->add_option("--model", model_dir, "Model directory")->required();
  diag->add_option("--data", data_dir, "Dataset directory")->required();
  diag->add_option("--bins", bins, "Reliability bins")->check(CLI::PositiveNumber);
  diag->add_option("--out", out_path, "JSON output")->required();

  auto* self = cli.add_subcommand("selfcheck", "Gradient, special-function and Monte-Carlo checks");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    cli.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << cli.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (!kernels_name.empty()) kernels::select(kernels::parse_isa(kernels_name));

    if (*gen) {
      benchgen::BenchSpec spec;
      if (!spec_path.empty()) spec = benchgen::BenchSpec::from_json(read_json_file(spec_path));
      const auto d = benchgen::generate(spec);
      data::save_dataset(d, out_path);
      const auto report = benchgen::validate(d);
      io::write_atomic(fs::path(out_path) / "validation.json", report.to_json().dump(2) + "\n");
      nlohmann::ordered_json fields;
      fields["seeds"] = {{"dataset", spec.seed}};
      fields["dataset"] = dataset_fields(out_path);
      update_manifest(out_path, fields,
                      {{"train", fs::path(out_path) / data::kTrainFile},
                       {"eval", fs::path(out_path) / data::kEvalFile},
                       {"classes", fs::path(out_path) / data::kClassesFile},
                       {"spec", fs::path(out_path) / data::kSpecFile},
                       {"validation", fs::path(out_path) / "validation.json"}});
      for (const auto& v : report.violations) err << v.code << ": " << v.detail << "\n";
      out << "generated " << d.train.size() << " train + " << d.eval.size() << " eval scenes in " << out_path
          << (report.ok() ? ", validation ok\n" : ", validation FAILED\n");
      return report.ok() ? kOk : kValidation;
    }

    if (*train) {
      const auto config = load_config(config_path);
      if (print_config) {
        out << config.to_json().dump(2) << "\n";
        return kOk;
      }
      if (phase == 0 || data_dir.empty() || out_path.empty()) {
        err << "error: train needs --phase, --data and --out\n";
        return kUsage;
      }
      const auto d = load_validated(data_dir);
      const fs::path model(out_path);
      JsonlLog log(model / ("phase" + std::to_string(phase) + ".jsonl"));
      pipeline::run_phase(phase, d, config, model, [&](const nlohmann::ordered_json& j) { log(j); });
      log.commit();
      io::write_atomic(model / ("config.phase" + std::to_string(phase) + ".json"), config.to_json().dump(2) + "\n");
      const char* ckpt_file = phase == 1 ? pipeline::kEncoderFile
                              : phase == 2 ? pipeline::kDecoderFile
                                           : pipeline::kClassifierFile;
      nlohmann::ordered_json fields;
      fields["config_hash"]["phase" + std::to_string(phase)] = config.hash();
      fields["seeds"] = {{"root", config.seed},
                         {"phase1", config.phase_seed(1)},
                         {"phase2", config.phase_seed(2)},
                         {"phase3", config.phase_seed(3)}};
      fields["dataset"] = dataset_fields(data_dir);
      const std::string p = "phase" + std::to_string(phase);
      update_manifest(model, fields,
                      {{p + "_checkpoint", model / ckpt_file},
                       {p + "_log", model / (p + ".jsonl")},
                       {p + "_config", model / ("config." + p + ".json")}});
      out << "phase " << phase << " done, wrote " << (model / ckpt_file).string() << "\n";
      return kOk;
    }

    if (*eval || *sweep || *diag) {
      const auto d = load_validated(data_dir);
      const auto model = pipeline::load_model(model_dir);
      const fs::path target(out_path);
      std::string artifact;
      if (*eval) {
        const auto factor = calibration::parse_calibration(calibration);
        const auto e = pipeline::evaluate(model, d.eval, d.catalog, factor,
                                          scope == "per-scene" ? calibration::UBarScope::kPerScene
                                                               : calibration::UBarScope::kDataset);
        io::write_atomic(target, pipeline::report_json(e, d.catalog).dump(2) + "\n");
        artifact = "eval_" + calibration::to_string(factor);
        out << "seen mIoU " << e.report.seen_miou << ", unseen mIoU " << e.report.unseen_miou << ", HmIoU "
            << e.report.hmiou << "\n";
      } else if (*sweep) {
        const auto g = metrics::parse_grid(grid);
        const auto pred = pipeline::predict(model, d.eval);
        const auto mask = d.catalog.seen_mask();
        const auto rows = metrics::eta_sweep(pred, mask, g, calibration::estimate_u_bar(pred.p, pred.u, mask));
        const bool json = target.extension() == ".json";
        io::write_atomic(target, json ? metrics::sweep_json(rows).dump(2) + "\n" : metrics::sweep_csv(rows));
        artifact = "sweep";
        out << "wrote " << rows.size() << " rows to " << target.string() << "\n";
      } else {
        const auto j = pipeline::diagnose(model, d.eval, d.catalog, bins);
        io::write_atomic(target, j.dump(2) + "\n");
        artifact = "diagnose";
        out << "mean u seen " << j["mean_u_seen"].get<double>() << ", unseen " << j["mean_u_unseen"].get<double>()
            << "\n";
      }
      nlohmann::ordered_json fields;
      fields["dataset"] = dataset_fields(data_dir);
      fields["model"] = model_dir;
      const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
      update_manifest(dir, fields, {{artifact, target}});
      return kOk;
    }

    if (*self) return selfcheck(out) ? kOk : kNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace gzsl::app
