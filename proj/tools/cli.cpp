#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "uaopose/digest.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/gumlp.hpp"
#include "uaopose/metrics.hpp"
#include "uaopose/refine.hpp"
#include "uaopose/report.hpp"
#include "uaopose/skeleton.hpp"
#include "uaopose/synthetic.hpp"
#include "uaopose/training.hpp"

namespace uaopose::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Exit {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw Exit{code, message}; }

struct RunConfig {
  ModelConfig model;
  OptimizationConfig refine;
  TrainOptions train;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::string noise_profile = "uniform:0";
  std::string data, ckpt, refined, traces, out, trace_out;
  std::size_t jobs = 1;
};

json config_json(const RunConfig& c, const std::string& command) {
  json j;
  j["command"] = command;
  j["seed"] = c.seed;
  j["model"] = {{"joints", c.model.joints},         {"blocks", c.model.blocks},
                {"channels", c.model.channels},     {"spatial_mid", c.model.spatial_mid},
                {"layer_norm_eps", c.model.layer_norm_eps}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch", c.train.batch_size},
                {"lr", c.train.lr},
                {"holdout", c.train.holdout_fraction}};
  j["refine"] = {{"lambda_p", c.refine.lambda_projection},
                 {"lambda_u", c.refine.lambda_uncertainty},
                 {"iters", c.refine.iterations},
                 {"lr", c.refine.lr},
                 {"variant", variant_name(c.refine.variant)},
                 {"jobs", c.jobs}};
  j["gen_data"] = {{"n", c.n}, {"noise_profile", c.noise_profile}};
  j["paths"] = {{"data", c.data},     {"ckpt", c.ckpt}, {"refined", c.refined},
                {"traces", c.traces}, {"out", c.out},   {"trace_out", c.trace_out}};
  return j;
}

// File values first; flags given on the command line are applied afterwards.
void apply_config_file(RunConfig& c, const std::string& path) {
  if (!fs::exists(path)) fail(kMissingInput, "config file not found: " + path);
  json j;
  try {
    j = json::parse(read_text(path));
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("model")) {
      const json& m = j["model"];
      c.model.joints = m.value("joints", c.model.joints);
      c.model.blocks = m.value("blocks", c.model.blocks);
      c.model.channels = m.value("channels", c.model.channels);
      c.model.spatial_mid = m.value("spatial_mid", c.model.spatial_mid);
      c.model.layer_norm_eps = m.value("layer_norm_eps", c.model.layer_norm_eps);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch", c.train.batch_size);
      c.train.lr = t.value("lr", c.train.lr);
      c.train.holdout_fraction = t.value("holdout", c.train.holdout_fraction);
    }
    if (j.contains("refine")) {
      const json& r = j["refine"];
      c.refine.lambda_projection = r.value("lambda_p", c.refine.lambda_projection);
      c.refine.lambda_uncertainty = r.value("lambda_u", c.refine.lambda_uncertainty);
      c.refine.iterations = r.value("iters", c.refine.iterations);
      c.refine.lr = r.value("lr", c.refine.lr);
      if (r.contains("variant")) c.refine.variant = parse_variant(r["variant"].get<std::string>());
      c.jobs = r.value("jobs", c.jobs);
    }
    if (j.contains("gen_data")) {
      const json& g = j["gen_data"];
      c.n = g.value("n", c.n);
      c.noise_profile = g.value("noise_profile", c.noise_profile);
    }
    if (j.contains("paths")) {
      const json& p = j["paths"];
      c.data = p.value("data", c.data);
      c.ckpt = p.value("ckpt", c.ckpt);
      c.refined = p.value("refined", c.refined);
      c.traces = p.value("traces", c.traces);
      c.out = p.value("out", c.out);
      c.trace_out = p.value("trace_out", c.trace_out);
    }
  } catch (const json::exception& e) {
    fail(kUsage, "bad config file " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    fail(kUsage, "bad config file " + path + ": " + e.what());
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_out(const fs::path& path, const std::string& text) {
  try {
    write_text(path.string(), text);
  } catch (const IoError& e) {
    fail(kIo, e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(kIo, "cannot create directory " + dir.string());
}

// Written before any work starts; the timestamp is the only run-dependent field.
void write_run_config(const RunConfig& c, const std::string& command, const fs::path& path) {
  json j = config_json(c, command);
  j["metadata"] = {{"timestamp", timestamp()}};
  write_out(path, j.dump(2) + "\n");
}

void require_input(const std::string& path, const char* what) {
  if (path.empty()) fail(kUsage, std::string("missing --") + what);
  if (!fs::exists(path)) fail(kMissingInput, std::string(what) + " file not found: " + path);
}

std::vector<PoseSample> load_data(const std::string& path, std::size_t joints) {
  require_input(path, "data");
  try {
    return load_dataset(path, joints);
  } catch (const ShapeError& e) {
    fail(kConfigMismatch, path + ": " + e.what());
  } catch (const ParseError& e) {
    fail(kIo, path + ": " + e.what());
  } catch (const IoError& e) {
    fail(kIo, e.what());
  }
}

std::pair<ModelParams, ModelConfig> load_model(const std::string& path) {
  require_input(path, "ckpt");
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    if (e.kind() == CheckpointErrorKind::Shape) fail(kConfigMismatch, path + ": " + e.what());
    fail(kIo, path + ": " + e.what());
  }
}

Eigen::VectorXd parse_noise_profile(const std::string& spec, std::size_t joints) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) fail(kUsage, "noise profile must be uniform:SIGMA or limbend:SIGMA");
  const std::string kind = spec.substr(0, colon);
  double sigma = 0.0;
  try {
    std::size_t used = 0;
    sigma = std::stod(spec.substr(colon + 1), &used);
    if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing text");
  } catch (const std::exception&) {
    fail(kUsage, "bad noise sigma in '" + spec + "'");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail(kUsage, "noise sigma must be a finite value >= 0");
  if (kind == "uniform") return uniform_noise(joints, sigma);
  if (kind == "limbend") return limb_end_noise(sigma);
  fail(kUsage, "unknown noise profile '" + kind + "'");
}

std::string digest_of(const ModelParams& params, const ModelConfig& cfg) {
  const auto bytes = serialize_checkpoint(params, cfg);
  return to_hex(sha256(bytes));
}

std::string format_prediction(std::size_t index, const Pose3D& mu, const Eigen::VectorXd& s) {
  std::string out = "{\"index\":" + std::to_string(index) + ",\"mu\":[";
  for (Eigen::Index k = 0; k < mu.rows(); ++k) {
    out += k ? ",[" : "[";
    for (int c = 0; c < 3; ++c) out += (c ? "," : "") + format_real(mu(k, c));
    out += "]";
  }
  out += "],\"s\":[";
  for (Eigen::Index k = 0; k < s.size(); ++k) out += (k ? "," : "") + format_real(s(k));
  out += "]}";
  return out;
}

// Reads prediction lines ({"mu","s"}) or dataset lines (j3d taken as the
// prediction with s = 0).
std::vector<GaussianPosePrediction> load_predictions(const std::string& path, std::size_t joints) {
  require_input(path, "refined");
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    fail(kIo, e.what());
  }
  std::vector<GaussianPosePrediction> preds;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      GaussianPosePrediction p;
      if (j.contains("mu")) {
        const auto rows = j.at("mu").get<std::vector<std::vector<double>>>();
        const auto s = j.at("s").get<std::vector<double>>();
        if (rows.size() != joints || s.size() != joints)
          fail(kConfigMismatch, path + ": line " + std::to_string(number) + " has the wrong joint count");
        p.mu.resize(static_cast<Eigen::Index>(joints), 3);
        p.s.resize(static_cast<Eigen::Index>(joints));
        for (std::size_t k = 0; k < joints; ++k) {
          if (rows[k].size() != 3) throw ParseError("mu rows must hold 3 numbers", number);
          for (int c = 0; c < 3; ++c) p.mu(static_cast<Eigen::Index>(k), c) = rows[k][c];
          p.s(static_cast<Eigen::Index>(k)) = s[k];
        }
      } else {
        const PoseSample sample = parse_sample(line, number, joints);
        p.mu = sample.j3d;
        p.s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(joints));
      }
      preds.push_back(std::move(p));
    } catch (const json::exception& e) {
      fail(kIo, path + ": line " + std::to_string(number) + ": " + e.what());
    } catch (const ParseError& e) {
      fail(kIo, path + ": " + e.what());
    } catch (const ShapeError& e) {
      fail(kConfigMismatch, path + ": " + e.what());
    }
  }
  return preds;
}

OptimizationTrace parse_trace_csv(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    fail(kIo, e.what());
  }
  OptimizationTrace trace;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 5) fail(kIo, path + ": malformed trace row '" + line + "'");
    try {
      TraceRecord r;
      r.projection = std::stod(f[1]);
      r.uncertainty = std::stod(f[2]);
      r.total = std::stod(f[3]);
      if (!f[4].empty()) r.mpjpe_mm = std::stod(f[4]);
      trace.records.push_back(r);
    } catch (const std::exception&) {
      fail(kIo, path + ": malformed trace row '" + line + "'");
    }
  }
  return trace;
}

std::string trace_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trace_%05zu.csv", i);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(RunConfig& c) {
  if (c.n == 0) fail(kUsage, "--n must be at least 1");
  if (c.out.empty()) fail(kUsage, "missing --out");
  const SkeletonGraph graph = default_h36m_skeleton();
  const Eigen::VectorXd noise = parse_noise_profile(c.noise_profile, graph.joint_count());
  const fs::path out(c.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_run_config(c, "gen-data", fs::path(c.out + ".run_config.json"));
  const auto samples = make_dataset(c.n, noise, c.seed);
  try {
    save_dataset(samples, c.out);
  } catch (const IoError& e) {
    fail(kIo, e.what());
  }
  std::cout << "samples: " << samples.size() << "\n";
  std::cout << "sha256: " << file_sha256(c.out) << "\n";
  return kOk;
}

int cmd_train(RunConfig& c) {
  if (c.out.empty()) fail(kUsage, "missing --out");
  require_input(c.data, "data");
  try {
    c.model.seed = c.seed;
    c.model.validate();
  } catch (const std::logic_error& e) {
    fail(kUsage, e.what());
  }
  c.train.seed = c.seed;
  ensure_dir(c.out);
  write_run_config(c, "train", fs::path(c.out) / "run_config.json");

  const SkeletonGraph graph = default_h36m_skeleton();
  if (c.model.joints != graph.joint_count())
    fail(kConfigMismatch, "model joints (" + std::to_string(c.model.joints) +
                              ") do not match the skeleton (" + std::to_string(graph.joint_count()) + ")");
  const auto data = load_data(c.data, c.model.joints);
  if (data.empty()) fail(kMissingInput, "dataset is empty: " + c.data);

  TrainResult result;
  try {
    result = train(init_params(c.model), c.model, graph, data, c.train, [](const EpochLog& r) {
      std::cerr << "epoch " << r.epoch << " nll " << r.train_nll << " mpjpe_mm " << r.train_mpjpe_mm;
      if (r.heldout_mpjpe_mm) std::cerr << " heldout_mpjpe_mm " << *r.heldout_mpjpe_mm;
      std::cerr << "\n";
    });
  } catch (const ContractError& e) {
    fail(kUsage, e.what());
  }
  write_out(fs::path(c.out) / "train_log.csv", format_train_log(result.log));
  const fs::path ckpt = fs::path(c.out) / "model.ckpt";
  try {
    save_checkpoint(result.params, c.model, ckpt.string());
    load_checkpoint(ckpt.string());
  } catch (const CheckpointError& e) {
    fail(kIo, e.what());
  }
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  std::cout << "parameter digest: " << digest_of(result.params, c.model) << "\n";
  if (result.log.empty()) return kOk;
  const EpochLog& last = result.log.back();
  std::cout << "final train_nll: " << format_real(last.train_nll) << "\n";
  std::cout << "final train_mpjpe_mm: " << format_real(last.train_mpjpe_mm) << "\n";
  return std::isfinite(last.train_nll) ? kOk : kFailure;
}

int cmd_refine(RunConfig& c, bool model_flags_given) {
  if (c.out.empty()) fail(kUsage, "missing --out");
  try {
    c.refine.validate();
  } catch (const ContractError& e) {
    fail(kUsage, e.what());
  }
  require_input(c.ckpt, "ckpt");
  require_input(c.data, "data");
  auto [params, cfg] = load_model(c.ckpt);
  if (model_flags_given && c.model.joints != cfg.joints)
    fail(kConfigMismatch, "configured joints (" + std::to_string(c.model.joints) +
                              ") differ from the checkpoint (" + std::to_string(cfg.joints) + ")");
  c.model = cfg;
  const fs::path out(c.out);
  const fs::path trace_dir = c.trace_out.empty() ? out / "traces" : fs::path(c.trace_out);
  ensure_dir(out);
  ensure_dir(trace_dir);
  write_run_config(c, "refine", out / "run_config.json");

  const SkeletonGraph graph = default_h36m_skeleton();
  if (graph.joint_count() != cfg.joints)
    fail(kConfigMismatch, "checkpoint has " + std::to_string(cfg.joints) + " joints, skeleton has " +
                              std::to_string(graph.joint_count()));
  const auto data = load_data(c.data, cfg.joints);

  const std::string before = digest_of(params, cfg);
  std::cout << "parameter digest before: " << before << "\n";
  const auto results = refine_samples(params, cfg, graph, data, c.refine, c.jobs);
  const std::string after = digest_of(params, cfg);
  std::cout << "parameter digest after: " << after << "\n";
  if (before != after) {
    std::cout << "digest equal: false\n";
    return kFailure;
  }
  std::cout << "digest equal: true\n";

  std::string preds;
  std::vector<OptimizationTrace> traces;
  for (std::size_t i = 0; i < results.size(); ++i) {
    preds += format_prediction(i, results[i].pose, results[i].log_variance) + "\n";
    write_out(trace_dir / trace_name(i), trace_csv(results[i].trace));
    traces.push_back(results[i].trace);
  }
  write_out(out / "predictions.jsonl", preds);
  const auto rows = mean_curves(traces);
  write_out(out / "curves.csv", curves_csv(rows));
  if (!rows.empty() && rows.front().mean_mpjpe_mm && rows.back().mean_mpjpe_mm)
    std::cout << "mean mpjpe_mm: iteration 0 " << format_real(*rows.front().mean_mpjpe_mm) << ", iteration "
              << rows.size() - 1 << " " << format_real(*rows.back().mean_mpjpe_mm) << "\n";
  std::cout << "samples: " << results.size() << "\n";
  return kOk;
}

// Shared by eval and report.
int cmd_evaluate(RunConfig& c, const std::string& command) {
  if (c.out.empty()) fail(kUsage, "missing --out");
  if (c.ckpt.empty() && c.refined.empty()) fail(kUsage, "need --ckpt and/or --refined");
  require_input(c.data, "data");
  if (!c.ckpt.empty()) require_input(c.ckpt, "ckpt");
  if (!c.refined.empty()) require_input(c.refined, "refined");
  if (!c.traces.empty() && !fs::is_directory(c.traces))
    fail(kMissingInput, "trace directory not found: " + c.traces);

  const SkeletonGraph graph = default_h36m_skeleton();
  std::optional<std::pair<ModelParams, ModelConfig>> model;
  if (!c.ckpt.empty()) {
    model = load_model(c.ckpt);
    c.model = model->second;
    if (model->second.joints != graph.joint_count())
      fail(kConfigMismatch, "checkpoint joint count does not match the skeleton");
  }
  const fs::path out(c.out);
  ensure_dir(out);
  write_run_config(c, command, out / "run_config.json");

  const auto data = load_data(c.data, graph.joint_count());
  std::vector<Pose3D> gts;
  for (const auto& s : data) gts.push_back(s.j3d);

  std::vector<GaussianPosePrediction> plain;
  if (model) {
    std::string lines;
    for (std::size_t i = 0; i < data.size(); ++i) {
      plain.push_back(forward(model->first, model->second, graph, data[i].j2d));
      lines += format_prediction(i, plain.back().mu, plain.back().s) + "\n";
    }
    write_out(out / "predictions.jsonl", lines);
  }

  std::vector<GaussianPosePrediction> evaluated = plain;
  if (!c.refined.empty()) {
    evaluated = load_predictions(c.refined, graph.joint_count());
    if (evaluated.size() != data.size())
      fail(kConfigMismatch, c.refined + " holds " + std::to_string(evaluated.size()) +
                                " predictions for " + std::to_string(data.size()) + " samples");
  }
  if (evaluated.empty()) fail(kMissingInput, "dataset is empty: " + c.data);

  if (model && !c.refined.empty()) {
    std::string table = "index,mpjpe_unrefined_mm,mpjpe_refined_mm,pa_mpjpe_unrefined_mm,pa_mpjpe_refined_mm\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      table += std::to_string(i) + "," + format_real(mpjpe_mm(plain[i].mu, gts[i])) + "," +
               format_real(mpjpe_mm(evaluated[i].mu, gts[i])) + "," +
               format_real(pa_mpjpe_mm(plain[i].mu, gts[i])) + "," +
               format_real(pa_mpjpe_mm(evaluated[i].mu, gts[i])) + "\n";
    }
    write_out(out / "comparison.csv", table);
  }

  std::vector<OptimizationTrace> traces;
  if (!c.traces.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(c.traces))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) traces.push_back(parse_trace_csv(f.string()));
  }

  EvalReport report;
  try {
    report = evaluate(evaluated, gts);
    emit_report(report, traces, c.out, graph.joint_names());
  } catch (const IoError& e) {
    fail(kIo, e.what());
  } catch (const AlignmentError& e) {
    fail(kFailure, e.what());
  } catch (const ShapeError& e) {
    fail(kConfigMismatch, e.what());
  }
  std::cout << "mpjpe_mm: " << format_real(report.mpjpe_mm) << "\n";
  std::cout << "pa_mpjpe_mm: " << format_real(report.pa_mpjpe_mm) << "\n";
  std::cout << "pck_150: " << format_real(report.pck_150) << "\n";
  std::cout << "auc: " << format_real(report.auc) << "\n";
  std::cout << "spearman_s_vs_error: " << format_real(report.spearman_s_vs_error)
            << (report.spearman_degenerate ? " (degenerate)" : "") << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Uncertainty-aware 2D-to-3D pose lifting with test-time refinement", "uaopose"};
  app.require_subcommand(1);

  RunConfig c;
  std::string config_path;
  // Flag targets; copied into c only when given, so they override the config file.
  RunConfig f;
  std::string variant = "input";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags override its values)");
    sub->add_option("--seed", f.seed, "Global seed");
    sub->add_option("--out", f.out, "Output path");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic JSONL dataset");
  common(gen);
  gen->add_option("--n", f.n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--noise-profile", f.noise_profile, "uniform:SIGMA or limbend:SIGMA");

  auto* tr = app.add_subcommand("train", "Train the lifting network");
  common(tr);
  tr->add_option("--data", f.data, "Training dataset (JSONL)");
  tr->add_option("--epochs", f.train.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", f.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", f.train.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--holdout", f.train.holdout_fraction, "Held-out fraction")->check(CLI::Range(0.0, 0.99));
  tr->add_option("--joints", f.model.joints, "Joint count K");
  tr->add_option("--blocks", f.model.blocks, "Block count N");
  tr->add_option("--channels", f.model.channels, "Channels C");
  tr->add_option("--spatial-mid", f.model.spatial_mid, "Spatial hidden width");

  auto* rf = app.add_subcommand("refine", "Test-time refinement with frozen parameters");
  common(rf);
  rf->add_option("--ckpt", f.ckpt, "Checkpoint");
  rf->add_option("--data", f.data, "Dataset (JSONL)");
  rf->add_option("--lambda-p", f.refine.lambda_projection, "Projection loss weight")->check(CLI::NonNegativeNumber);
  rf->add_option("--lambda-u", f.refine.lambda_uncertainty, "Uncertainty loss weight")->check(CLI::NonNegativeNumber);
  rf->add_option("--iters", f.refine.iterations, "Iterations T")->check(CLI::NonNegativeNumber);
  rf->add_option("--lr", f.refine.lr, "Adam step size")->check(CLI::PositiveNumber);
  rf->add_option("--variant", variant, "input or deep")->check(CLI::IsMember({"input", "deep"}));
  rf->add_option("--trace-out", f.trace_out, "Directory for per-sample trace CSVs");
  rf->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
  rf->add_option("--joints", f.model.joints, "Expected joint count");

  auto* ev = app.add_subcommand("eval", "Evaluate a model and/or a predictions file");
  auto* rp = app.add_subcommand("report", "Evaluate and render curves from refinement traces");
  for (auto* sub : {ev, rp}) {
    common(sub);
    sub->add_option("--ckpt", f.ckpt, "Checkpoint");
    sub->add_option("--data", f.data, "Dataset (JSONL)");
    sub->add_option("--refined", f.refined, "Predictions JSONL to evaluate");
  }
  rp->add_option("--traces", f.traces, "Directory of trace CSVs");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };

  try {
    if (!config_path.empty()) apply_config_file(c, config_path);
    if (given("--seed")) c.seed = f.seed;
    if (given("--out")) c.out = f.out;
    if (given("--n")) c.n = f.n;
    if (given("--noise-profile")) c.noise_profile = f.noise_profile;
    if (given("--data")) c.data = f.data;
    if (given("--ckpt")) c.ckpt = f.ckpt;
    if (given("--refined")) c.refined = f.refined;
    if (given("--traces")) c.traces = f.traces;
    if (given("--trace-out")) c.trace_out = f.trace_out;
    if (given("--epochs")) c.train.epochs = f.train.epochs;
    if (given("--batch")) c.train.batch_size = f.train.batch_size;
    if (given("--holdout")) c.train.holdout_fraction = f.train.holdout_fraction;
    if (given("--joints")) c.model.joints = f.model.joints;
    if (given("--blocks")) c.model.blocks = f.model.blocks;
    if (given("--channels")) c.model.channels = f.model.channels;
    if (given("--spatial-mid")) c.model.spatial_mid = f.model.spatial_mid;
    if (given("--lambda-p")) c.refine.lambda_projection = f.refine.lambda_projection;
    if (given("--lambda-u")) c.refine.lambda_uncertainty = f.refine.lambda_uncertainty;
    if (given("--iters")) c.refine.iterations = f.refine.iterations;
    if (given("--variant")) c.refine.variant = parse_variant(variant);
    if (given("--jobs")) c.jobs = f.jobs;
    if (given("--lr")) {
      if (sub == tr) c.train.lr = f.train.lr;
      else c.refine.lr = f.refine.lr;
    }

    if (sub == gen) return cmd_gen_data(c);
    if (sub == tr) return cmd_train(c);
    if (sub == rf) return cmd_refine(c, given("--joints"));
    if (sub == ev) return cmd_evaluate(c, "eval");
    return cmd_evaluate(c, "report");
  } catch (const Exit& e) {
    std::cerr << "uaopose: " << e.message << "\n";
    return e.code;
  } catch (const IoError& e) {
    std::cerr << "uaopose: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "uaopose: " << e.what() << "\n";
    return kFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace uaopose::cli
