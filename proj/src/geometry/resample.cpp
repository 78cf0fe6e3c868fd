#include "sit/geometry/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sit/errors.hpp"

namespace sit::geometry {

namespace {

constexpr double kInsideTolerance = 1e-14;

// Smallest of the three edge-plane triple products; >= 0 inside the
// spherical triangle (a, b, c) wound counter-clockwise from outside.
double containment(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return std::min({a.cross(b).dot(p), b.cross(c).dot(p), c.cross(a).dot(p)});
}

template <typename FaceRange, typename Vertices>
std::uint32_t pick_face(const Vec3& p, const FaceRange& faces, const Vertices& v, std::uint32_t first,
                        std::uint32_t count) {
  std::uint32_t best = first;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::uint32_t f = first; f < first + count; ++f) {
    const auto& face = faces[f];
    const double score = containment(p, v[face[0]], v[face[1]], v[face[2]]);
    if (score >= -kInsideTolerance) return f;
    if (score > best_score) {
      best_score = score;
      best = f;
    }
  }
  return best;
}

Location finish(const Vec3& p, std::uint32_t face_index, const Face& face,
                const std::vector<Vec3>& v) {
  auto w = gnomonic_barycentric(p, v[face[0]], v[face[1]], v[face[2]]);
  double sum = 0.0;
  for (auto& x : w) {
    x = std::max(x, 0.0);
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return Location{face_index, w};
}

SurfaceSignal interpolate(const SurfaceSignal& signal, std::span<const Vec3> target,
                          const std::vector<Face>& faces, auto&& locate) {
  SurfaceSignal out(target.size(), signal.channels);
  out.channel_names = signal.channel_names;
  for (std::size_t t = 0; t < target.size(); ++t) {
    const Location loc = locate(target[t]);
    const auto& face = faces[loc.face];
    for (std::size_t c = 0; c < signal.channels; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += loc.weights[k] * signal.at(face[k], c);
      out.at(t, c) = acc;
    }
  }
  return out;
}

void check_signal_matches(const SurfaceSignal& signal, std::size_t vertex_count) {
  if (signal.vertex_count != vertex_count)
    throw DataError("signal has " + std::to_string(signal.vertex_count) +
                    " vertices, source mesh has " + std::to_string(vertex_count));
  if (signal.values.size() != signal.vertex_count * signal.channels)
    throw DataError("signal value count does not match its declared shape");
}

}  // namespace

std::array<double, 3> gnomonic_barycentric(const Vec3& p, const Vec3& a, const Vec3& b,
                                           const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  const Vec3 q = p * (n.dot(a) / n.dot(p));
  std::array<double, 3> w{(b - q).cross(c - q).dot(n) / nn, (c - q).cross(a - q).dot(n) / nn,
                          (a - q).cross(b - q).dot(n) / nn};
  const double sum = w[0] + w[1] + w[2];
  for (auto& x : w) x /= sum;
  return w;
}

Location locate_on_sphere(const Vec3& point, const Icosphere& mesh) {
  const auto& v = mesh.vertices();
  std::uint32_t face = pick_face(point, mesh.faces_at(0), v, 0, 20);
  for (int level = 1; level <= mesh.order(); ++level)
    face = pick_face(point, mesh.faces_at(level), v, 4 * face, 4);
  return finish(point, face, mesh.faces()[face], v);
}

Location locate_brute_force(const Vec3& point, const SphereMesh& mesh) {
  const auto face = pick_face(point, mesh.faces, mesh.vertices, 0,
                              static_cast<std::uint32_t>(mesh.faces.size()));
  return finish(point, face, mesh.faces[face], mesh.vertices);
}

SurfaceSignal resample_barycentric(const SurfaceSignal& signal, const Icosphere& source,
                                   std::span<const Vec3> target) {
  check_signal_matches(signal, source.vertex_count());
  return interpolate(signal, target, source.faces(),
                     [&](const Vec3& p) { return locate_on_sphere(p, source); });
}

SurfaceSignal resample_barycentric(const SurfaceSignal& signal, const SphereMesh& source,
                                   std::span<const Vec3> target) {
  check_signal_matches(signal, source.vertex_count());
  for (std::size_t f = 0; f < source.faces.size(); ++f) {
    const auto& [a, b, c] = source.faces[f];
    const Vec3& va = source.vertices[a];
    const double area2 = (source.vertices[b] - va).cross(source.vertices[c] - va).norm();
    if (!(area2 > 1e-15))
      throw DataError("source face " + std::to_string(f) + " is degenerate (zero area)");
  }
  return interpolate(signal, target, source.faces,
                     [&](const Vec3& p) { return locate_brute_force(p, source); });
}

Vec3 mirror_point(const Vec3& p) { return {-p.x(), p.y(), p.z()}; }

std::vector<Vec3> mirror_hemisphere(std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(mirror_point(p));
  return out;
}

SphereMesh mirror_hemisphere(const SphereMesh& mesh) {
  SphereMesh out{mirror_hemisphere(mesh.vertices), mesh.faces};
  for (auto& f : out.faces) std::swap(f[1], f[2]);
  return out;
}

SurfaceSignal mirror_signal(const SurfaceSignal& signal, const Icosphere& mesh) {
  check_signal_matches(signal, mesh.vertex_count());
  const auto perm = mesh.mirror_permutation();
  SurfaceSignal out(signal.vertex_count, signal.channels);
  out.channel_names = signal.channel_names;
  for (std::size_t i = 0; i < signal.vertex_count; ++i)
    for (std::size_t c = 0; c < signal.channels; ++c) out.at(i, c) = signal.at(perm[i], c);
  return out;
}

}  // namespace sit::geometry
