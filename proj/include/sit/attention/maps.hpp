#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sit/geometry/patches.hpp"
#include "sit/geometry/signal.hpp"
#include "sit/model/sit_model.hpp"

namespace sit::attention {

// Residual-aware rollout of one head: per layer A~ = 0.5 (A + I) with rows
// renormalised, R = A~_L ... A~_1, then the regression-token row of R over
// the patch columns (special-token columns dropped). StateError when the
// record is incomplete or the head does not exist.
std::vector<double> rollout(const model::AttentionRecord& record, std::size_t head);

// Full rollout row of the regression token, before any column is dropped.
std::vector<double> rollout_row(const model::AttentionRecord& record, std::size_t head);

// Every vertex receives the mean weight of the patches containing it.
std::vector<double> patches_to_vertices(std::span<const double> patch_weights, const geometry::PatchTable& table);

// Zeroes entries below the q-quantile: with n entries, the ceil((1-q) n)
// largest survive (ties with the cut value survive too). 0 <= q < 1.
std::vector<double> threshold_map(std::span<const double> map, double q);

// Per-head vertex maps, [head][vertex].
struct VertexAttentionMap {
  std::size_t heads = 0;
  std::size_t vertex_count = 0;
  std::vector<double> values;
  std::string subject;
  std::string task;
  std::size_t first_layer = 0;  // rollout spans layers [first_layer, last_layer]
  std::size_t last_layer = 0;

  VertexAttentionMap() = default;
  VertexAttentionMap(std::size_t head_count, std::size_t vertices)
      : heads(head_count), vertex_count(vertices), values(head_count * vertices, 0.0) {}

  std::span<double> head(std::size_t h) { return {values.data() + h * vertex_count, vertex_count}; }
  std::span<const double> head(std::size_t h) const { return {values.data() + h * vertex_count, vertex_count}; }

  // DataError unless entries are finite and non-negative.
  void validate() const;
};

// Rollout of every head mapped onto the mesh.
VertexAttentionMap vertex_attention(const model::AttentionRecord& record, const geometry::PatchTable& table);

// Applies threshold_map to each head.
VertexAttentionMap threshold_heads(const VertexAttentionMap& map, double q);

// Element-wise mean; ShapeError on differing shapes, DataError when empty.
VertexAttentionMap average_maps(std::span<const VertexAttentionMap> maps);

// One channel per head, named head0, head1, ...
geometry::SurfaceSignal to_signal(const VertexAttentionMap& map);

}  // namespace sit::attention
