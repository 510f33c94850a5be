#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "uaopose/tensor.hpp"

namespace uaopose {

// Undirected joint graph. Self-connections are implicit (added during
// normalization), so edges must not contain them.
class SkeletonGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  SkeletonGraph(std::size_t joint_count, std::vector<Edge> edges,
                std::vector<std::string> joint_names = {});

  std::size_t joint_count() const noexcept { return joint_count_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& joint_names() const noexcept { return names_; }

  bool is_connected() const;
  bool is_tree() const { return edges_.size() + 1 == joint_count_ && is_connected(); }

  // {"K": int, "edges": [[i,j],...], "names": [...]}
  static SkeletonGraph from_json(const std::string& text);
  std::string to_json() const;

  bool operator==(const SkeletonGraph&) const = default;

 private:
  std::size_t joint_count_;
  std::vector<Edge> edges_;
  std::vector<std::string> names_;
};

// 17-joint pelvis-rooted tree:
//  0 pelvis, 1 r-hip, 2 r-knee, 3 r-ankle, 4 l-hip, 5 l-knee, 6 l-ankle,
//  7 spine, 8 thorax, 9 neck, 10 head, 11 l-shoulder, 12 l-elbow,
//  13 l-wrist, 14 r-shoulder, 15 r-elbow, 16 r-wrist.
// Edges are listed parent-first, in an order where every parent is placed
// before its children.
SkeletonGraph default_h36m_skeleton();

// D^-1/2 (A + I) D^-1/2 as a [K, K] tensor.
ad::Tensor normalized_adjacency(const SkeletonGraph& graph);

// Â · y along the joint axis of y ([K, d] or [B, K, d]). Each entry sums its
// non-zero terms in ascending order, so relabeling joints permutes the output
// exactly.
ad::Var graph_aggregate(const ad::Tensor& adjacency, ad::Var y);

// relu?(Â · x · w). x is [K, d_in] or batched [B, K, d_in]; w is [d_in, d_out].
ad::Var gcn_layer(ad::Var x, ad::Var w, const ad::Tensor& adjacency, bool activate);
ad::Var gcn_layer(ad::Var x, ad::Var w, const SkeletonGraph& graph, bool activate);

}  // namespace uaopose
