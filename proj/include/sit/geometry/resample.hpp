#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sit/geometry/icosphere.hpp"
#include "sit/geometry/signal.hpp"

namespace sit::geometry {

struct Location {
  std::uint32_t face = 0;
  std::array<double, 3> weights{};  // on the face corners in face-tuple order
};

// Barycentric coordinates of p inside triangle (a, b, c) after gnomonic
// projection of p onto the triangle's plane. Weights sum to one; they are
// all non-negative iff p lies in the spherical triangle.
std::array<double, 3> gnomonic_barycentric(const Vec3& p, const Vec3& a, const Vec3& b,
                                           const Vec3& c);

// Descends the subdivision hierarchy from the icosahedron, O(order) work.
// Points on shared edges go to the lowest-indexed containing face.
Location locate_on_sphere(const Vec3& point, const Icosphere& mesh);

// Linear scan over all faces; the reference the hierarchical search is
// tested against, and the fallback for sphere meshes without a hierarchy.
Location locate_brute_force(const Vec3& point, const SphereMesh& mesh);

// Each target point receives the barycentric combination of the three
// source vertices of its containing face.
SurfaceSignal resample_barycentric(const SurfaceSignal& signal, const Icosphere& source,
                                   std::span<const Vec3> target);
SurfaceSignal resample_barycentric(const SurfaceSignal& signal, const SphereMesh& source,
                                   std::span<const Vec3> target);

// Sagittal mirror x -> -x. Meshes also reverse their winding so faces stay
// outward-facing; signals ride along unchanged with their carrier.
Vec3 mirror_point(const Vec3& p);
std::vector<Vec3> mirror_hemisphere(std::span<const Vec3> points);
SphereMesh mirror_hemisphere(const SphereMesh& mesh);

// Re-expresses a signal living on the mirrored icosphere on the canonical
// one, i.e. the mirrored data resampled onto the original vertex positions.
SurfaceSignal mirror_signal(const SurfaceSignal& signal, const Icosphere& mesh);

}  // namespace sit::geometry
