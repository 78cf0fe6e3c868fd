#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sit/geometry/icosphere.hpp"
#include "sit/geometry/patches.hpp"
#include "sit/geometry/signal.hpp"

namespace sit::geometry {

// SMESH v1
//   SMESH 1
//   order <k>          (-1 for meshes that are not icospheres)
//   vertices <V>
//   faces <F>
//   end
//   V*3 float64 coordinates, then F*3 uint32 vertex indices (little-endian)
struct MeshFile {
  int order = -1;
  SphereMesh mesh;
};

std::vector<std::byte> encode_smesh(const SphereMesh& mesh, int order);
MeshFile decode_smesh(std::span<const std::byte> bytes);
void write_smesh(const std::filesystem::path& path, const SphereMesh& mesh, int order);
MeshFile read_smesh(const std::filesystem::path& path);

// SSIG v1
//   SSIG 1
//   vertices <V>
//   channels <C>
//   channel <name>     (C lines)
//   end
//   V*C float32 values, vertex-major (little-endian)
std::vector<std::byte> encode_ssig(const SurfaceSignal& signal);
SurfaceSignal decode_ssig(std::span<const std::byte> bytes);
void write_ssig(const std::filesystem::path& path, const SurfaceSignal& signal);
SurfaceSignal read_ssig(const std::filesystem::path& path);

// SPTAB v1
//   SPTAB 1
//   high_order <k>
//   patch_order <p>
//   patches <N>
//   vertices_per_patch <V>
//   mesh_vertices <M>
//   end
//   N*V uint32 vertex indices (little-endian)
void write_patch_table(const std::filesystem::path& path, const PatchTable& table);
PatchTable read_patch_table(const std::filesystem::path& path);

}  // namespace sit::geometry
