#include "uaopose/refine.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "uaopose/adam.hpp"
#include "uaopose/errors.hpp"

namespace uaopose {

LatentVariant parse_variant(const std::string& name) {
  if (name == "input") return LatentVariant::Input;
  if (name == "deep") return LatentVariant::Deep;
  throw std::invalid_argument("unknown latent variant '" + name + "' (expected input or deep)");
}

std::string variant_name(LatentVariant v) { return v == LatentVariant::Input ? "input" : "deep"; }

void OptimizationConfig::validate() const {
  if (iterations < 0) throw ContractError("iteration count must be >= 0");
  if (!(lr > 0.0)) throw ContractError("refinement learning rate must be positive");
  if (!(lambda_projection >= 0.0) || !(lambda_uncertainty >= 0.0))
    throw ContractError("loss weights must be non-negative");
}

std::string trace_csv(const OptimizationTrace& trace) {
  std::ostringstream os;
  os << "iteration,proj_loss,unc_loss,total_loss,mpjpe_mm\n";
  for (std::size_t t = 0; t < trace.records.size(); ++t) {
    const auto& r = trace.records[t];
    os << t << ',' << format_real(r.projection) << ',' << format_real(r.uncertainty) << ','
       << format_real(r.total) << ',';
    if (r.mpjpe_mm) os << format_real(*r.mpjpe_mm);
    os << '\n';
  }
  return os.str();
}

namespace {

// Shared loop. `decode_latent` maps the latent leaf to the forward outputs.
template <class Decode>
RefinementResult run(ad::Tape& tape, ad::Tensor z, const GaussianPosePrediction& anchor,
                     const Pose2D& j2d, const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                     const Pose3D* gt, Decode&& decode_latent) {
  const std::size_t mark = tape.node_count();
  AdamState adam;
  adam.hyper.lr = ocfg.lr;
  const ad::Tensor target = to_tensor(j2d);

  RefinementResult result;
  result.anchor = anchor;
  for (long it = 0;; ++it) {
    tape.rewind(mark);
    const std::size_t ops_before = tape.op_count();
    ad::Var latent = tape.leaf(z, true);
    ForwardVars out = decode_latent(latent);
    CombinedLoss loss = combined_loss(out.mu, tape.constant(target), p, anchor,
                                      ocfg.lambda_projection, ocfg.lambda_uncertainty);
    if (it == 0) result.ops_per_iteration = tape.op_count() - ops_before;

    TraceRecord rec;
    rec.projection = loss.values.projection;
    rec.uncertainty = loss.values.uncertainty;
    rec.total = loss.values.total;
    const Pose3D pose = to_pose3d(out.mu.value());
    if (gt) rec.mpjpe_mm = (pose - *gt).rowwise().norm().mean() * 1000.0;
    result.trace.records.push_back(rec);

    if (it == ocfg.iterations) {
      result.pose = pose;
      const ad::Tensor& sv = out.s.value();
      result.log_variance = Eigen::Map<const Eigen::VectorXd>(sv.data().data(),
                                                              static_cast<Eigen::Index>(sv.size()));
      break;
    }
    tape.backward(loss.total);
    const ad::Tensor* g = tape.grad(latent);
    const ad::Tensor zero = ad::Tensor::zeros(z.shape());
    adam_step(adam, {&z}, {g ? g : &zero});
  }
  return result;
}

void check_inputs(const ModelConfig& cfg, const SkeletonGraph& graph, const Pose2D& j2d,
                  const Pose3D* gt) {
  if (graph.joint_count() != cfg.joints || static_cast<std::size_t>(j2d.rows()) != cfg.joints)
    throw ShapeError("refinement: joint count does not match the model");
  if (gt && gt->rows() != j2d.rows()) throw ShapeError("refinement: ground truth has the wrong K");
}

}  // namespace

RefinementResult optimize_latent(const ModelParams& params, const ModelConfig& cfg,
                                 const SkeletonGraph& graph, const Pose2D& j2d,
                                 const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                                 const Pose3D* gt) {
  ocfg.validate();
  check_inputs(cfg, graph, j2d, gt);
  const GaussianPosePrediction anchor = forward(params, cfg, graph, j2d);
  const ad::Tensor adjacency = normalized_adjacency(graph);
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return run(tape, to_tensor(j2d), anchor, j2d, p, ocfg, gt,
             [&](ad::Var z) { return forward(bound, cfg, adjacency, z); });
}

RefinementResult optimize_latent_deep(const ModelParams& params, const ModelConfig& cfg,
                                      const SkeletonGraph& graph, const Pose2D& j2d,
                                      const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                                      const Pose3D* gt) {
  ocfg.validate();
  check_inputs(cfg, graph, j2d, gt);
  const GaussianPosePrediction anchor = forward(params, cfg, graph, j2d);
  ad::Tensor hidden = hidden_state(params, cfg, graph, j2d);
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return run(tape, std::move(hidden), anchor, j2d, p, ocfg, gt,
             [&](ad::Var h) { return decode(bound, cfg, h); });
}

RefinementResult refine(const ModelParams& params, const ModelConfig& cfg, const SkeletonGraph& graph,
                        const Pose2D& j2d, const ProjectionMatrix& p, const OptimizationConfig& ocfg,
                        const Pose3D* gt) {
  return ocfg.variant == LatentVariant::Input ? optimize_latent(params, cfg, graph, j2d, p, ocfg, gt)
                                              : optimize_latent_deep(params, cfg, graph, j2d, p, ocfg, gt);
}

std::vector<RefinementResult> refine_samples(const ModelParams& params, const ModelConfig& cfg,
                                             const SkeletonGraph& graph,
                                             const std::vector<PoseSample>& samples,
                                             const OptimizationConfig& ocfg, std::size_t jobs) {
  ocfg.validate();
  std::vector<RefinementResult> results(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const auto& s = samples[i];
        results[i] = refine(params, cfg, graph, s.j2d, s.p, ocfg, &s.j3d);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = samples.size();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, samples.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace uaopose
