#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sit::geometry {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;
using Edge = std::pair<std::uint32_t, std::uint32_t>;

// Triangle mesh whose vertices lie on the unit sphere. Faces are wound
// counter-clockwise when seen from outside.
struct SphereMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
};

// Sorted, de-duplicated (min, max) vertex pairs of a face list.
std::vector<Edge> unique_edges(std::span<const Face> faces);

// Recursively subdivided regular icosahedron.
//
// Vertex indices are stable across levels: the vertices of level k are the
// first 10*4^k+2 vertices of every finer level. Face f of level k owns the
// children 4f..4f+3 of level k+1, so the face list of each level is kept for
// hierarchical point location and patch lattice construction.
class Icosphere {
 public:
  static constexpr int kMaxOrder = 8;

  explicit Icosphere(int order);

  int order() const { return order_; }
  const SphereMesh& mesh() const { return mesh_; }
  const std::vector<Vec3>& vertices() const { return mesh_.vertices; }
  const std::vector<Face>& faces() const { return mesh_.faces; }

  std::size_t vertex_count() const { return mesh_.vertices.size(); }
  std::size_t face_count() const { return mesh_.faces.size(); }
  std::size_t edge_count() const;

  // Faces of the intermediate subdivision level (0 <= level <= order).
  const std::vector<Face>& faces_at(int level) const;

  // Index of the vertex inserted on edge (a, b) of the given level when
  // subdividing to level + 1. Requires level < order.
  std::uint32_t midpoint(int level, std::uint32_t a, std::uint32_t b) const;

  // Vertex permutation realising the x -> -x mirror: vertex i maps onto
  // vertex mirror_permutation()[i]. The vertex set is closed under the mirror
  // bit for bit, so the permutation is exact.
  std::vector<std::uint32_t> mirror_permutation() const;

  static constexpr std::size_t expected_vertices(int order) {
    return 10 * (std::size_t{1} << (2 * order)) + 2;
  }
  static constexpr std::size_t expected_faces(int order) {
    return 20 * (std::size_t{1} << (2 * order));
  }
  static constexpr std::size_t expected_edges(int order) {
    return 30 * (std::size_t{1} << (2 * order));
  }

 private:
  int order_;
  SphereMesh mesh_;
  std::vector<std::vector<Face>> level_faces_;
  // Sorted edge list per level (except the finest); the midpoint of the
  // i-th edge of level k has index vertex_count(k) + i.
  std::vector<std::vector<Edge>> level_edges_;
};

// Throws BoundsError unless 0 <= order <= Icosphere::kMaxOrder.
Icosphere build_icosphere(int order);

}  // namespace sit::geometry
