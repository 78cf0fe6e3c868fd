#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sit/geometry/icosphere.hpp"
#include "sit/geometry/signal.hpp"

namespace sit::geometry {

// Tokenisation of a high-order icosphere: one patch per face of the
// patch-order icosphere, listing the high-order vertices of that face's
// barycentric lattice.
//
// Lattice point (a, b) has weights ((n-a-b)/n, a/n, b/n) on the face corners
// (v0, v1, v2) taken in face-tuple order, n = 2^(high_order - patch_order).
// Rows run k = 0..n with a + b = k, each row scanned from the v1 side
// (a = k) to the v2 side (a = 0). Vertices on patch boundaries appear in
// every patch that touches them.
struct PatchTable {
  int high_order = 6;
  int patch_order = 2;
  std::size_t patch_count = 0;
  std::size_t vertices_per_patch = 0;
  std::size_t mesh_vertex_count = 0;
  std::vector<std::uint32_t> indices;  // [patch_count x vertices_per_patch]

  std::span<const std::uint32_t> patch(std::size_t i) const {
    return {indices.data() + i * vertices_per_patch, vertices_per_patch};
  }
  // Number of patches containing each high-order vertex.
  std::vector<std::uint32_t> multiplicity() const;

  static constexpr std::size_t lattice_size(int high_order, int patch_order) {
    const std::size_t n = std::size_t{1} << (high_order - patch_order);
    return (n + 1) * (n + 2) / 2;
  }
};

// Throws BoundsError unless high_order > patch_order >= 0 and high_order is a
// valid icosphere order.
PatchTable build_patch_table(int high_order, int patch_order);
PatchTable build_patch_table(const Icosphere& high, int patch_order);

// Token i = channel-major concatenation of the patch-i vertex values:
// all V values of channel 0, then channel 1, ...
PatchSequence extract_patches(const SurfaceSignal& signal, const PatchTable& table);

// Inverse of extract_patches: every vertex receives the mean of its copies.
SurfaceSignal scatter_patches(const PatchSequence& patches, const PatchTable& table);

}  // namespace sit::geometry
