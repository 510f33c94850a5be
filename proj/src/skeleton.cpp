#include "uaopose/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "json.hpp"
#include "uaopose/errors.hpp"

namespace uaopose {

SkeletonGraph::SkeletonGraph(std::size_t joint_count, std::vector<Edge> edges,
                             std::vector<std::string> joint_names)
    : joint_count_(joint_count), edges_(std::move(edges)), names_(std::move(joint_names)) {
  if (joint_count_ == 0) throw ContractError("skeleton needs at least one joint");
  if (!names_.empty() && names_.size() != joint_count_)
    throw ContractError("skeleton has " + std::to_string(joint_count_) + " joints but " +
                        std::to_string(names_.size()) + " names");
  std::set<Edge> seen;
  for (const auto& [a, b] : edges_) {
    if (a >= joint_count_ || b >= joint_count_)
      throw ContractError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                          ") out of range for K=" + std::to_string(joint_count_));
    if (a == b) throw ContractError("self-loop on joint " + std::to_string(a));
    if (!seen.insert(std::minmax(a, b)).second)
      throw ContractError("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
  }
}

bool SkeletonGraph::is_connected() const {
  std::vector<std::size_t> parent(joint_count_);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = joint_count_;
  for (const auto& [a, b] : edges_) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

SkeletonGraph SkeletonGraph::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("skeleton JSON: ") + e.what());
  }
  try {
    const auto k = doc.at("K").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("skeleton JSON: edge must be [i, j]");
      edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    std::vector<std::string> names;
    if (doc.contains("names")) names = doc["names"].get<std::vector<std::string>>();
    return SkeletonGraph(k, std::move(edges), std::move(names));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("skeleton JSON: ") + e.what());
  }
}

std::string SkeletonGraph::to_json() const {
  nlohmann::json doc;
  doc["K"] = joint_count_;
  doc["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : edges_) doc["edges"].push_back({a, b});
  if (!names_.empty()) doc["names"] = names_;
  return doc.dump();
}

SkeletonGraph default_h36m_skeleton() {
  std::vector<SkeletonGraph::Edge> edges = {
      {0, 1},  {1, 2},  {2, 3},                     // right leg
      {0, 4},  {4, 5},  {5, 6},                     // left leg
      {0, 7},  {7, 8},  {8, 9},  {9, 10},           // spine to head
      {8, 11}, {11, 12}, {12, 13},                  // left arm
      {8, 14}, {14, 15}, {15, 16},                  // right arm
  };
  std::vector<std::string> names = {
      "pelvis", "r-hip",      "r-knee",  "r-ankle", "l-hip",      "l-knee",
      "l-ankle", "spine",     "thorax",  "neck",    "head",       "l-shoulder",
      "l-elbow", "l-wrist",   "r-shoulder", "r-elbow", "r-wrist",
  };
  return SkeletonGraph(17, std::move(edges), std::move(names));
}

ad::Tensor normalized_adjacency(const SkeletonGraph& graph) {
  const std::size_t k = graph.joint_count();
  ad::Tensor a({k, k});
  for (std::size_t i = 0; i < k; ++i) a.at(i, i) = 1.0;
  for (const auto& [i, j] : graph.edges()) {
    a.at(i, j) = 1.0;
    a.at(j, i) = 1.0;
  }
  std::vector<double> deg(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) deg[i] += a.at(i, j);
  // One rounding per entry: 1/sqrt(d_i d_j).
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (a.at(i, j) != 0.0) a.at(i, j) = 1.0 / std::sqrt(deg[i] * deg[j]);
  return a;
}

ad::Var graph_aggregate(const ad::Tensor& adjacency, ad::Var y) {
  const ad::Shape& ys = y.shape();
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
    throw ShapeError("graph_aggregate: adjacency must be square, got " + ad::shape_str(adjacency.shape()));
  const std::size_t k = adjacency.dim(0);
  if (!(ys.size() == 2 || ys.size() == 3) || ys[ys.size() - 2] != k)
    throw ShapeError("graph_aggregate: input " + ad::shape_str(ys) + " does not have K=" + std::to_string(k) +
                     " rows");
  const std::size_t batch = ys.size() == 3 ? ys[0] : 1;
  const std::size_t d = ys.back();

  struct Entry {
    std::size_t j;
    double a;
  };
  auto rows = std::make_shared<std::vector<std::vector<Entry>>>(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (adjacency.at(i, j) != 0.0) (*rows)[i].push_back({j, adjacency.at(i, j)});

  ad::Tensor out(ys);
  const auto yv = y.value().data();
  auto ov = out.data();
  std::vector<double> terms;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * k * d;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& row = (*rows)[i];
      for (std::size_t c = 0; c < d; ++c) {
        terms.clear();
        for (const Entry& e : row) terms.push_back(e.a * yv[base + e.j * d + c]);
        std::sort(terms.begin(), terms.end());
        double acc = 0.0;
        for (double t : terms) acc += t;
        ov[base + i * d + c] = acc;
      }
    }
  }
  return y.tape()->record("graph_aggregate", std::move(out), {y},
                          [rows, batch, k, d](const ad::BackwardContext& ctx) {
                            ad::Tensor* gy = ctx.input_grad(0);
                            if (!gy) return;
                            const auto g = ctx.grad_out.data();
                            auto t = gy->data();
                            for (std::size_t b = 0; b < batch; ++b) {
                              const std::size_t base = b * k * d;
                              for (std::size_t i = 0; i < k; ++i)
                                for (const Entry& e : (*rows)[i])
                                  for (std::size_t c = 0; c < d; ++c)
                                    t[base + e.j * d + c] += e.a * g[base + i * d + c];
                            }
                          });
}

ad::Var gcn_layer(ad::Var x, ad::Var w, const ad::Tensor& adjacency, bool activate) {
  const ad::Shape& xs = x.shape();
  const std::size_t k = adjacency.dim(0);
  if (w.shape().size() != 2) throw ShapeError("gcn_layer: weight must be 2-D");
  const std::size_t d_in = w.shape()[0], d_out = w.shape()[1];
  const bool batched = xs.size() == 3;
  if (!(xs.size() == 2 || batched) || xs[xs.size() - 2] != k || xs.back() != d_in)
    throw ShapeError("gcn_layer: input " + ad::shape_str(xs) + " does not match K=" +
                     std::to_string(k) + ", d_in=" + std::to_string(d_in));
  const std::size_t batch = batched ? xs[0] : 1;

  ad::Var xw = ad::matmul(ad::reshape(x, {batch * k, d_in}), w, ad::MatmulKernel::RowInvariant);
  if (batched) xw = ad::reshape(xw, {batch, k, d_out});
  ad::Var out = graph_aggregate(adjacency, xw);
  return activate ? ad::relu(out) : out;
}

ad::Var gcn_layer(ad::Var x, ad::Var w, const SkeletonGraph& graph, bool activate) {
  return gcn_layer(x, w, normalized_adjacency(graph), activate);
}

}  // namespace uaopose
