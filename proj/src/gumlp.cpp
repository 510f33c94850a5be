#include "uaopose/gumlp.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "uaopose/digest.hpp"
#include "uaopose/errors.hpp"

namespace uaopose {

namespace {

ModelTensors<ad::Shape> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t K = cfg.joints, C = cfg.channels, B = cfg.bottleneck(), S = cfg.spatial_mid;
  ModelTensors<ad::Shape> s;
  s.embed_w = {2, C};
  s.embed_b = {C};
  s.blocks.resize(cfg.blocks);
  for (auto& b : s.blocks) {
    b.gcn_w = {C, C};
    b.channel = {{C}, {C}, {C, B}, {B}, {B, B}, {B}, {B, C}, {C}};
    b.spatial = {{K}, {K}, {K, S}, {S}, {S, S}, {S}, {S, K}, {K}};
  }
  s.mu_w = {C, 3};
  s.mu_b = {3};
  s.s_w = {C, 1};
  s.s_b = {1};
  return s;
}

template <class T>
std::vector<T*> parameter_list(ModelTensors<T>& p) {
  std::vector<T*> out;
  for_each_parameter(p, [&](const std::string&, T& t) { out.push_back(&t); });
  return out;
}

template <class T>
std::vector<const T*> parameter_list(const ModelTensors<T>& p) {
  std::vector<const T*> out;
  for_each_parameter(p, [&](const std::string&, const T& t) { out.push_back(&t); });
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// x [R, d_in] -> gelu(x w + b)
ad::Var mlp(ad::Var x, ad::Var w, ad::Var b) { return ad::gelu(ad::add(ad::matmul(x, w), b)); }

}  // namespace

void ModelConfig::validate() const {
  if (joints < 1) throw ContractError("ModelConfig: K must be positive");
  if (blocks < 1) throw ContractError("ModelConfig: N must be >= 1");
  if (channels < 8) throw ContractError("ModelConfig: C must be >= 8");
  if (channels % 4 != 0) throw ContractError("ModelConfig: C must be divisible by 4");
  if (spatial_mid < joints) throw ContractError("ModelConfig: S_mid must be >= K");
  if (!(layer_norm_eps > 0.0)) throw ContractError("ModelConfig: layer_norm_eps must be positive");
}

std::vector<std::pair<std::string, ad::Shape>> parameter_manifest(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, ad::Shape>> out;
  for_each_parameter(parameter_shapes(cfg),
                     [&](const std::string& name, const ad::Shape& s) { out.emplace_back(name, s); });
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t K = cfg.joints, C = cfg.channels, B = cfg.bottleneck(), S = cfg.spatial_mid;
  const std::size_t embed = 2 * C + C;
  const std::size_t channel = 2 * C + (C * B + B) + (B * B + B) + (B * C + C);
  const std::size_t spatial = 2 * K + (K * S + S) + (S * S + S) + (S * K + K);
  const std::size_t block = C * C + channel + spatial;
  const std::size_t decoders = (3 * C + 3) + (C + 1);
  return embed + cfg.blocks * block + decoders;
}

std::size_t count_parameters(const ModelParams& params) {
  std::size_t n = 0;
  for_each_parameter(params, [&](const std::string&, const ad::Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& cfg) {
  const auto shapes = parameter_shapes(cfg);
  ModelParams p;
  p.blocks.resize(cfg.blocks);
  auto targets = parameter_list(p);
  auto sources = parameter_list(shapes);
  std::vector<std::string> names;
  for_each_parameter(shapes, [&](const std::string& n, const ad::Shape&) { names.push_back(n); });

  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ad::Shape& shape = *sources[i];
    ad::Tensor t(shape);
    if (shape.size() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.data()) v = dist(rng);
    } else if (ends_with(names[i], ".gamma")) {
      for (double& v : t.data()) v = 1.0;
    }
    *targets[i] = std::move(t);
  }
  return p;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundParams b;
  b.blocks.resize(params.blocks.size());
  auto targets = parameter_list(b);
  auto sources = parameter_list(params);
  for (std::size_t i = 0; i < targets.size(); ++i)
    *targets[i] = tape.leaf(*sources[i], requires_grad);
  return b;
}

ModelParams gradients(const ad::Tape& tape, const BoundParams& bound, const ModelParams& like) {
  ModelParams g;
  g.blocks.resize(like.blocks.size());
  auto targets = parameter_list(g);
  auto vars = parameter_list(bound);
  auto shapes = parameter_list(like);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ad::Tensor* grad = tape.grad(*vars[i]);
    *targets[i] = grad ? *grad : ad::Tensor::zeros(shapes[i]->shape());
  }
  return g;
}

ad::Var channel_umlp(ad::Var x, const ChannelUmlpTensors<ad::Var>& p, double eps) {
  const ad::Shape shape = x.shape();
  const std::size_t C = shape.back();
  if (p.ln_gamma.shape() != ad::Shape{C})
    throw ShapeError("channel_umlp: input " + ad::shape_str(shape) + " does not match C=" +
                     std::to_string(p.ln_gamma.shape().at(0)));
  const std::size_t rows = x.value().size() / C;
  ad::Var flat = ad::reshape(x, {rows, C});
  ad::Var down = mlp(ad::layer_norm(flat, p.ln_gamma, p.ln_beta, eps), p.down_w, p.down_b);
  ad::Var mid = ad::add(mlp(down, p.mid_w, p.mid_b), down);
  ad::Var up = ad::add(mlp(mid, p.up_w, p.up_b), flat);
  return ad::reshape(up, shape);
}

ad::Var spatial_umlp(ad::Var x, const SpatialUmlpTensors<ad::Var>& p, double eps) {
  const ad::Shape shape = x.shape();
  if (shape.size() < 2) throw ShapeError("spatial_umlp: need [K,C] or [B,K,C] input");
  const std::size_t K = shape[shape.size() - 2];
  if (p.ln_gamma.shape() != ad::Shape{K})
    throw ShapeError("spatial_umlp: input " + ad::shape_str(shape) + " does not match K=" +
                     std::to_string(p.ln_gamma.shape().at(0)));
  const std::size_t rows = x.value().size() / K;
  // Work on the joint axis: rows are (sample, channel), columns are joints.
  ad::Var xt = ad::reshape(ad::transpose(x, shape.size() - 2, shape.size() - 1), {rows, K});
  ad::Var up = mlp(ad::layer_norm(xt, p.ln_gamma, p.ln_beta, eps), p.up_w, p.up_b);
  ad::Var mid = ad::add(mlp(up, p.mid_w, p.mid_b), up);
  ad::Var down = ad::add(mlp(mid, p.down_w, p.down_b), xt);
  ad::Shape tshape = shape;
  std::swap(tshape[shape.size() - 2], tshape[shape.size() - 1]);
  return ad::transpose(ad::reshape(down, tshape), shape.size() - 2, shape.size() - 1);
}

ad::Var encode(const BoundParams& p, const ModelConfig& cfg, const ad::Tensor& adjacency,
               ad::Var j2d) {
  const ad::Shape& in = j2d.shape();
  const std::size_t K = cfg.joints, C = cfg.channels;
  const bool batched = in.size() == 3;
  if (!(in.size() == 2 || batched) || in[in.size() - 2] != K || in.back() != 2)
    throw ShapeError("forward: expected [" + std::to_string(K) + ",2] input, got " +
                     ad::shape_str(in));
  if (adjacency.shape() != ad::Shape{K, K}) throw ShapeError("forward: adjacency does not match K");
  const std::size_t batch = batched ? in[0] : 1;
  ad::Shape hidden_shape = batched ? ad::Shape{batch, K, C} : ad::Shape{K, C};

  ad::Var h = ad::add(ad::matmul(ad::reshape(j2d, {batch * K, 2}), p.embed_w), p.embed_b);
  h = ad::reshape(h, hidden_shape);
  for (const auto& block : p.blocks) {
    ad::Var g = gcn_layer(h, block.gcn_w, adjacency, true);
    ad::Var fused = ad::add(channel_umlp(g, block.channel, cfg.layer_norm_eps),
                            spatial_umlp(g, block.spatial, cfg.layer_norm_eps));
    h = ad::add(h, fused);
  }
  return h;
}

ForwardVars decode(const BoundParams& p, const ModelConfig& cfg, ad::Var hidden) {
  const ad::Shape& hs = hidden.shape();
  const std::size_t K = cfg.joints, C = cfg.channels;
  if (hs.size() < 2 || hs[hs.size() - 2] != K || hs.back() != C)
    throw ShapeError("decode: expected hidden [" + std::to_string(K) + "," + std::to_string(C) +
                     "], got " + ad::shape_str(hs));
  const std::size_t rows = hidden.value().size() / C;
  ad::Var flat = ad::reshape(hidden, {rows, C});
  ad::Shape mu_shape(hs.begin(), hs.end() - 1);
  ad::Shape s_shape = mu_shape;
  mu_shape.push_back(3);

  ForwardVars out;
  out.hidden = hidden;
  out.mu = ad::reshape(ad::add(ad::matmul(flat, p.mu_w), p.mu_b), mu_shape);
  ad::Var raw_s = ad::add(ad::matmul(flat, p.s_w), p.s_b);
  out.s = ad::reshape(ad::clamp(raw_s, kLogVarianceMin, kLogVarianceMax), s_shape);
  return out;
}

ForwardVars forward(const BoundParams& p, const ModelConfig& cfg, const ad::Tensor& adjacency,
                    ad::Var j2d) {
  return decode(p, cfg, encode(p, cfg, adjacency, j2d));
}

namespace {

GaussianPosePrediction to_prediction(const ForwardVars& out) {
  GaussianPosePrediction pred;
  pred.mu = to_pose3d(out.mu.value());
  const auto s = out.s.value().data();
  pred.s = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  return pred;
}

void check_joints(const ModelConfig& cfg, const SkeletonGraph& graph, Eigen::Index rows) {
  if (graph.joint_count() != cfg.joints || static_cast<std::size_t>(rows) != cfg.joints)
    throw ShapeError("forward: joint count mismatch (config K=" + std::to_string(cfg.joints) +
                     ", skeleton K=" + std::to_string(graph.joint_count()) +
                     ", input rows=" + std::to_string(rows) + ")");
}

}  // namespace

GaussianPosePrediction forward(const ModelParams& params, const ModelConfig& cfg,
                               const SkeletonGraph& graph, const Pose2D& j2d) {
  check_joints(cfg, graph, j2d.rows());
  ad::Tape tape;
  BoundParams p = bind(tape, params, false);
  return to_prediction(forward(p, cfg, normalized_adjacency(graph), tape.constant(to_tensor(j2d))));
}

GaussianPosePrediction forward_from_hidden(const ModelParams& params, const ModelConfig& cfg,
                                           const ad::Tensor& hidden) {
  ad::Tape tape;
  BoundParams p = bind(tape, params, false);
  return to_prediction(decode(p, cfg, tape.constant(hidden)));
}

ad::Tensor hidden_state(const ModelParams& params, const ModelConfig& cfg,
                        const SkeletonGraph& graph, const Pose2D& j2d) {
  check_joints(cfg, graph, j2d.rows());
  ad::Tape tape;
  BoundParams p = bind(tape, params, false);
  return encode(p, cfg, normalized_adjacency(graph), tape.constant(to_tensor(j2d))).value();
}

std::string parameter_digest(const ModelParams& params) {
  Sha256Hasher h;
  for_each_parameter(params, [&](const std::string& name, const ad::Tensor& t) {
    h.update(name);
    h.update(ad::shape_str(t.shape()));
    auto d = t.data();
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(double)));
  });
  const Sha256 d = h.finish();
  return to_hex(d);
}

}  // namespace uaopose
