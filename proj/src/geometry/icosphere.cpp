#include "sit/geometry/icosphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>

#include "sit/errors.hpp"

namespace sit::geometry {

namespace {

bool lex_less(const Vec3& a, const Vec3& b) {
  return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
}

SphereMesh make_icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v;
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      v.emplace_back(0.0, s1, s2 * phi);
      v.emplace_back(s1, s2 * phi, 0.0);
      v.emplace_back(s2 * phi, 0.0, s1);
    }
  }
  for (auto& p : v) p.normalize();
  std::sort(v.begin(), v.end(), lex_less);

  // Neighbours sit at the minimal pairwise distance; every mutually adjacent
  // triple is a face.
  double min_d = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      min_d = std::min(min_d, (v[i] - v[j]).norm());
  auto adjacent = [&](std::size_t i, std::size_t j) {
    return (v[i] - v[j]).norm() < min_d * (1.0 + 1e-9);
  };

  std::vector<Face> faces;
  for (std::uint32_t i = 0; i < v.size(); ++i)
    for (std::uint32_t j = i + 1; j < v.size(); ++j)
      for (std::uint32_t k = j + 1; k < v.size(); ++k) {
        if (!adjacent(i, j) || !adjacent(j, k) || !adjacent(i, k)) continue;
        const Vec3 n = (v[j] - v[i]).cross(v[k] - v[i]);
        if (n.dot(v[i] + v[j] + v[k]) > 0.0)
          faces.push_back({i, j, k});
        else
          faces.push_back({i, k, j});
      }
  return SphereMesh{std::move(v), std::move(faces)};
}

}  // namespace

std::vector<Edge> unique_edges(std::span<const Face> faces) {
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (const auto& f : faces) {
    for (int e = 0; e < 3; ++e) {
      const auto a = f[e];
      const auto b = f[(e + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

Icosphere::Icosphere(int order) : order_(order) {
  if (order < 0 || order > kMaxOrder)
    throw BoundsError("icosphere order " + std::to_string(order) +
                      " outside [0, " + std::to_string(kMaxOrder) + "]");

  mesh_ = make_icosahedron();
  level_faces_.push_back(mesh_.faces);

  for (int level = 0; level < order; ++level) {
    const auto& faces = level_faces_.back();
    auto edges = unique_edges(faces);
    const auto base = static_cast<std::uint32_t>(mesh_.vertices.size());

    mesh_.vertices.reserve(base + edges.size());
    for (const auto& [a, b] : edges) {
      Vec3 m = (mesh_.vertices[a] + mesh_.vertices[b]) * 0.5;
      m.normalize();
      mesh_.vertices.push_back(m);
    }

    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const Edge key{std::min(a, b), std::max(a, b)};
      const auto it = std::lower_bound(edges.begin(), edges.end(), key);
      return base + static_cast<std::uint32_t>(it - edges.begin());
    };

    std::vector<Face> children;
    children.reserve(faces.size() * 4);
    for (const auto& [a, b, c] : faces) {
      const auto ab = mid(a, b);
      const auto bc = mid(b, c);
      const auto ca = mid(c, a);
      children.push_back({a, ab, ca});
      children.push_back({ab, b, bc});
      children.push_back({ca, bc, c});
      children.push_back({ab, bc, ca});
    }
    level_edges_.push_back(std::move(edges));
    level_faces_.push_back(std::move(children));
  }
  mesh_.faces = level_faces_.back();
}

std::size_t Icosphere::edge_count() const {
  return unique_edges(mesh_.faces).size();
}

const std::vector<Face>& Icosphere::faces_at(int level) const {
  if (level < 0 || level > order_)
    throw BoundsError("level " + std::to_string(level) + " outside icosphere of order " +
                      std::to_string(order_));
  return level_faces_[static_cast<std::size_t>(level)];
}

std::uint32_t Icosphere::midpoint(int level, std::uint32_t a, std::uint32_t b) const {
  if (level < 0 || level >= order_)
    throw BoundsError("no subdivision below level " + std::to_string(level));
  const auto& edges = level_edges_[static_cast<std::size_t>(level)];
  const Edge key{std::min(a, b), std::max(a, b)};
  const auto it = std::lower_bound(edges.begin(), edges.end(), key);
  if (it == edges.end() || *it != key)
    throw BoundsError("vertices " + std::to_string(a) + "," + std::to_string(b) +
                      " do not form an edge at level " + std::to_string(level));
  return static_cast<std::uint32_t>(expected_vertices(level) +
                                    static_cast<std::size_t>(it - edges.begin()));
}

std::vector<std::uint32_t> Icosphere::mirror_permutation() const {
  using Key = std::tuple<double, double, double>;
  std::map<Key, std::uint32_t> lookup;
  for (std::uint32_t i = 0; i < mesh_.vertices.size(); ++i) {
    const auto& p = mesh_.vertices[i];
    lookup.emplace(Key{p.x(), p.y(), p.z()}, i);
  }
  std::vector<std::uint32_t> perm(mesh_.vertices.size());
  for (std::uint32_t i = 0; i < mesh_.vertices.size(); ++i) {
    const auto& p = mesh_.vertices[i];
    const auto it = lookup.find(Key{-p.x(), p.y(), p.z()});
    if (it == lookup.end())
      throw DataError("icosphere vertex " + std::to_string(i) + " has no mirror image");
    perm[i] = it->second;
  }
  return perm;
}

Icosphere build_icosphere(int order) { return Icosphere(order); }

}  // namespace sit::geometry
