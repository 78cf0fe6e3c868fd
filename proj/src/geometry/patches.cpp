#include "sit/geometry/patches.hpp"

#include <cmath>
#include <string>

#include "sit/errors.hpp"

namespace sit::geometry {

void SurfaceSignal::validate() const {
  if (values.size() != vertex_count * channels)
    throw DataError("signal holds " + std::to_string(values.size()) + " values, expected " +
                    std::to_string(vertex_count) + " x " + std::to_string(channels));
  if (!channel_names.empty() && channel_names.size() != channels)
    throw DataError("signal names " + std::to_string(channel_names.size()) + " channels, expected " +
                    std::to_string(channels));
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw DataError("non-finite signal value at vertex " + std::to_string(i / channels) +
                      ", channel " + std::to_string(i % channels));
}

namespace {

// Barycentric lattice of side n stored as (n+1) x (n+1) with a + b <= n.
class Lattice {
 public:
  explicit Lattice(std::size_t n) : n_(n), cells_((n + 1) * (n + 1), 0) {}
  std::size_t side() const { return n_; }
  std::uint32_t& operator()(std::size_t a, std::size_t b) { return cells_[a * (n_ + 1) + b]; }
  std::uint32_t operator()(std::size_t a, std::size_t b) const { return cells_[a * (n_ + 1) + b]; }

 private:
  std::size_t n_;
  std::vector<std::uint32_t> cells_;
};

Lattice refine(const Lattice& coarse, const Icosphere& ico, int level) {
  const std::size_t n = coarse.side();
  Lattice fine(2 * n);
  for (std::size_t a = 0; a <= n; ++a)
    for (std::size_t b = 0; a + b <= n; ++b) {
      fine(2 * a, 2 * b) = coarse(a, b);
      if (a + b < n) {
        fine(2 * a + 1, 2 * b) = ico.midpoint(level, coarse(a, b), coarse(a + 1, b));
        fine(2 * a, 2 * b + 1) = ico.midpoint(level, coarse(a, b), coarse(a, b + 1));
        fine(2 * a + 1, 2 * b + 1) = ico.midpoint(level, coarse(a + 1, b), coarse(a, b + 1));
      }
    }
  return fine;
}

}  // namespace

std::vector<std::uint32_t> PatchTable::multiplicity() const {
  std::vector<std::uint32_t> count(mesh_vertex_count, 0);
  for (auto idx : indices) ++count[idx];
  return count;
}

PatchTable build_patch_table(int high_order, int patch_order) {
  if (patch_order < 0 || high_order <= patch_order || high_order > Icosphere::kMaxOrder)
    throw BoundsError("patch table needs high_order > patch_order >= 0 (got " +
                      std::to_string(high_order) + ", " + std::to_string(patch_order) + ")");
  return build_patch_table(Icosphere(high_order), patch_order);
}

PatchTable build_patch_table(const Icosphere& high, int patch_order) {
  if (patch_order < 0 || high.order() <= patch_order)
    throw BoundsError("patch table needs high_order > patch_order >= 0 (got " +
                      std::to_string(high.order()) + ", " + std::to_string(patch_order) + ")");

  PatchTable table;
  table.high_order = high.order();
  table.patch_order = patch_order;
  table.mesh_vertex_count = high.vertex_count();
  table.vertices_per_patch = PatchTable::lattice_size(high.order(), patch_order);

  const auto& coarse_faces = high.faces_at(patch_order);
  table.patch_count = coarse_faces.size();
  table.indices.reserve(table.patch_count * table.vertices_per_patch);

  for (const auto& face : coarse_faces) {
    Lattice lattice(1);
    lattice(0, 0) = face[0];
    lattice(1, 0) = face[1];
    lattice(0, 1) = face[2];
    for (int level = patch_order; level < high.order(); ++level)
      lattice = refine(lattice, high, level);

    const std::size_t n = lattice.side();
    for (std::size_t k = 0; k <= n; ++k)
      for (std::size_t a = k + 1; a-- > 0;) table.indices.push_back(lattice(a, k - a));
  }
  return table;
}

PatchSequence extract_patches(const SurfaceSignal& signal, const PatchTable& table) {
  if (signal.vertex_count != table.mesh_vertex_count)
    throw DataError("signal has " + std::to_string(signal.vertex_count) +
                    " vertices but the patch table indexes a mesh of " +
                    std::to_string(table.mesh_vertex_count));
  if (signal.channels == 0) throw DataError("signal has no channels");
  if (signal.values.size() != signal.vertex_count * signal.channels)
    throw DataError("signal value count does not match its declared shape");

  PatchSequence seq;
  seq.patch_count = table.patch_count;
  seq.vertices_per_patch = table.vertices_per_patch;
  seq.channels = signal.channels;
  seq.tokens.resize(seq.patch_count * seq.token_length());

  const std::size_t v_count = table.vertices_per_patch;
  for (std::size_t p = 0; p < table.patch_count; ++p) {
    auto out = seq.token(p);
    const auto idx = table.patch(p);
    for (std::size_t c = 0; c < signal.channels; ++c)
      for (std::size_t v = 0; v < v_count; ++v)
        out[c * v_count + v] = static_cast<float>(signal.at(idx[v], c));
  }
  return seq;
}

SurfaceSignal scatter_patches(const PatchSequence& patches, const PatchTable& table) {
  if (patches.patch_count != table.patch_count ||
      patches.vertices_per_patch != table.vertices_per_patch)
    throw DataError("patch sequence shape does not match the patch table");

  SurfaceSignal out(table.mesh_vertex_count, patches.channels);
  const auto mult = table.multiplicity();
  const std::size_t v_count = table.vertices_per_patch;
  for (std::size_t p = 0; p < table.patch_count; ++p) {
    const auto tok = patches.token(p);
    const auto idx = table.patch(p);
    for (std::size_t c = 0; c < patches.channels; ++c)
      for (std::size_t v = 0; v < v_count; ++v) out.at(idx[v], c) += tok[c * v_count + v];
  }
  for (std::size_t v = 0; v < out.vertex_count; ++v) {
    if (mult[v] == 0) throw DataError("vertex " + std::to_string(v) + " belongs to no patch");
    for (std::size_t c = 0; c < out.channels; ++c) out.at(v, c) /= mult[v];
  }
  return out;
}

}  // namespace sit::geometry
