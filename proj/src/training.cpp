#include "uaopose/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "uaopose/adam.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/objectives.hpp"

namespace uaopose {

namespace {

constexpr std::size_t kInferenceChunk = 256;

ad::Tensor stack_inputs(std::span<const PoseSample> samples, std::span<const std::size_t> idx) {
  const std::size_t k = samples[idx[0]].joints();
  ad::Tensor t({idx.size(), k, 2});
  auto out = t.data();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Pose2D& p = samples[idx[b]].j2d;
    if (static_cast<std::size_t>(p.rows()) != k) throw ShapeError("samples differ in joint count");
    std::copy(p.data(), p.data() + p.size(), out.begin() + static_cast<std::ptrdiff_t>(b * k * 2));
  }
  return t;
}

ad::Tensor stack_targets(std::span<const PoseSample> samples, std::span<const std::size_t> idx) {
  const std::size_t k = samples[idx[0]].joints();
  ad::Tensor t({idx.size(), k, 3});
  auto out = t.data();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Pose3D& p = samples[idx[b]].j3d;
    std::copy(p.data(), p.data() + p.size(), out.begin() + static_cast<std::ptrdiff_t>(b * k * 3));
  }
  return t;
}

void check_joints(const ModelConfig& cfg, const SkeletonGraph& graph,
                  std::span<const PoseSample> samples) {
  if (graph.joint_count() != cfg.joints)
    throw ShapeError("graph has " + std::to_string(graph.joint_count()) + " joints, model expects " +
                     std::to_string(cfg.joints));
  for (const auto& s : samples)
    if (s.joints() != cfg.joints) throw ShapeError("sample joint count does not match the model");
}

}  // namespace

TrainResult train(ModelParams params, const ModelConfig& cfg, const SkeletonGraph& graph,
                  const std::vector<PoseSample>& dataset, const TrainOptions& options,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ContractError("train: empty dataset");
  if (options.batch_size == 0) throw ContractError("train: batch size must be positive");
  if (!(options.lr > 0.0)) throw ContractError("train: learning rate must be positive");
  if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0))
    throw ContractError("train: holdout fraction must be in [0, 1)");
  check_joints(cfg, graph, dataset);

  const auto held = static_cast<std::size_t>(static_cast<double>(dataset.size()) * options.holdout_fraction);
  const std::size_t n_train = dataset.size() - held;
  if (n_train == 0) throw ContractError("train: holdout leaves no training samples");
  std::span<const PoseSample> all(dataset);
  std::span<const PoseSample> heldout = all.subspan(n_train);

  const ad::Tensor adjacency = normalized_adjacency(graph);
  AdamState adam;
  adam.hyper.lr = options.lr;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double nll_sum = 0.0, mpjpe_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += options.batch_size) {
      const std::size_t end = std::min(n_train, start + options.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);

      ad::Tape tape;
      BoundParams bound = bind(tape, params, true);
      ad::Var x = tape.constant(stack_inputs(all, idx));
      ad::Var gt = tape.constant(stack_targets(all, idx));
      ForwardVars out = forward(bound, cfg, adjacency, x);
      ad::Var loss = nll_train_loss(out.mu, out.s, gt);
      tape.backward(loss);

      const double w = static_cast<double>(idx.size());
      nll_sum += loss.value().item() * w;
      mpjpe_sum += mpjpe_loss(out.mu, gt).value().item() * 1000.0 * w;
      adam_step(adam, params, gradients(tape, bound, params));
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_nll = nll_sum / static_cast<double>(n_train);
    row.train_mpjpe_mm = mpjpe_sum / static_cast<double>(n_train);
    if (!heldout.empty()) row.heldout_mpjpe_mm = mean_mpjpe_mm(params, cfg, graph, heldout);
    if (on_epoch) on_epoch(row);
    result.log.push_back(row);
  }
  result.params = std::move(params);
  return result;
}

std::vector<GaussianPosePrediction> predict_batch(const ModelParams& params, const ModelConfig& cfg,
                                                  const SkeletonGraph& graph,
                                                  std::span<const PoseSample> samples) {
  check_joints(cfg, graph, samples);
  const ad::Tensor adjacency = normalized_adjacency(graph);
  std::vector<GaussianPosePrediction> preds;
  preds.reserve(samples.size());
  const auto k = static_cast<Eigen::Index>(cfg.joints);
  for (std::size_t start = 0; start < samples.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(samples.size(), start + kInferenceChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    BoundParams bound = bind(tape, params, false);
    ForwardVars out = forward(bound, cfg, adjacency, tape.constant(stack_inputs(samples, idx)));
    const ad::Tensor& mu = out.mu.value();
    const ad::Tensor& s = out.s.value();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      GaussianPosePrediction p;
      p.mu = Eigen::Map<const Pose3D>(mu.data().data() + b * cfg.joints * 3, k, 3);
      p.s = Eigen::Map<const Eigen::VectorXd>(s.data().data() + b * cfg.joints, k);
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

double mean_mpjpe_mm(const ModelParams& params, const ModelConfig& cfg, const SkeletonGraph& graph,
                     std::span<const PoseSample> samples) {
  if (samples.empty()) throw ContractError("mean_mpjpe_mm: no samples");
  const auto preds = predict_batch(params, cfg, graph, samples);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    total += (preds[i].mu - samples[i].j3d).rowwise().norm().mean() * 1000.0;
  return total / static_cast<double>(samples.size());
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,train_nll,train_mpjpe_mm,heldout_mpjpe_mm\n";
  for (const auto& r : log) {
    os << r.epoch << ',' << format_real(r.train_nll) << ',' << format_real(r.train_mpjpe_mm) << ',';
    if (r.heldout_mpjpe_mm) os << format_real(*r.heldout_mpjpe_mm);
    os << '\n';
  }
  return os.str();
}

}  // namespace uaopose
