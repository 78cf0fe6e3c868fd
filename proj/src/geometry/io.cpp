#include "sit/geometry/io.hpp"

#include <cmath>
#include <string>

#include "sit/errors.hpp"
#include "sit/io/binary.hpp"

namespace sit::geometry {

namespace {

constexpr int kMeshVersion = 1;
constexpr int kSignalVersion = 1;
constexpr int kTableVersion = 1;

std::size_t checked_count(io::ByteReader& in, std::string_view key, long long limit) {
  const auto value = in.expect_int(key);
  if (value < 0 || value > limit) in.fail(std::string(key) + " out of range");
  return static_cast<std::size_t>(value);
}

}  // namespace

std::vector<std::byte> encode_smesh(const SphereMesh& mesh, int order) {
  io::ByteWriter out;
  out.line("SMESH " + std::to_string(kMeshVersion));
  out.line("order " + std::to_string(order));
  out.line("vertices " + std::to_string(mesh.vertices.size()));
  out.line("faces " + std::to_string(mesh.faces.size()));
  out.line("end");
  for (const auto& v : mesh.vertices) {
    out.put(v.x());
    out.put(v.y());
    out.put(v.z());
  }
  for (const auto& f : mesh.faces)
    for (auto idx : f) out.put(idx);
  return out.bytes();
}

MeshFile decode_smesh(std::span<const std::byte> bytes) {
  io::ByteReader in(bytes, "SMESH");
  in.expect_magic("SMESH", kMeshVersion);
  MeshFile file;
  file.order = static_cast<int>(in.expect_int("order"));
  const auto v_count = checked_count(in, "vertices", 1LL << 32);
  const auto f_count = checked_count(in, "faces", 1LL << 32);
  in.expect_end();
  in.require(v_count * 3 * sizeof(double) + f_count * 3 * sizeof(std::uint32_t));

  file.mesh.vertices.resize(v_count);
  for (auto& v : file.mesh.vertices) {
    const double x = in.get<double>();
    const double y = in.get<double>();
    const double z = in.get<double>();
    v = Vec3(x, y, z);
  }
  file.mesh.faces.resize(f_count);
  for (auto& f : file.mesh.faces)
    for (auto& idx : f) {
      idx = in.get<std::uint32_t>();
      if (idx >= v_count) in.fail("face index " + std::to_string(idx) + " out of range");
    }
  in.expect_eof();
  return file;
}

void write_smesh(const std::filesystem::path& path, const SphereMesh& mesh, int order) {
  io::write_file(path, encode_smesh(mesh, order));
}

MeshFile read_smesh(const std::filesystem::path& path) {
  return decode_smesh(io::read_file(path));
}

std::vector<std::byte> encode_ssig(const SurfaceSignal& signal) {
  signal.validate();
  io::ByteWriter out;
  out.line("SSIG " + std::to_string(kSignalVersion));
  out.line("vertices " + std::to_string(signal.vertex_count));
  out.line("channels " + std::to_string(signal.channels));
  for (std::size_t c = 0; c < signal.channels; ++c) {
    const std::string name =
        c < signal.channel_names.size() ? signal.channel_names[c] : "ch" + std::to_string(c);
    if (name.find('\n') != std::string::npos) throw DataError("channel name contains a newline");
    out.line("channel " + name);
  }
  out.line("end");
  for (double v : signal.values) out.put(static_cast<float>(v));
  return out.bytes();
}

SurfaceSignal decode_ssig(std::span<const std::byte> bytes) {
  io::ByteReader in(bytes, "SSIG");
  in.expect_magic("SSIG", kSignalVersion);
  const auto v_count = checked_count(in, "vertices", 1LL << 32);
  const auto c_count = checked_count(in, "channels", 1 << 16);
  SurfaceSignal signal(v_count, c_count);
  for (std::size_t c = 0; c < c_count; ++c) signal.channel_names.push_back(in.expect_field("channel"));
  in.expect_end();
  in.require(v_count * c_count * sizeof(float));
  for (auto& v : signal.values) {
    const auto at = in.offset();
    const float x = in.get<float>();
    if (!std::isfinite(x)) throw ParseError("SSIG: non-finite value", at);
    v = x;
  }
  in.expect_eof();
  return signal;
}

void write_ssig(const std::filesystem::path& path, const SurfaceSignal& signal) {
  io::write_file(path, encode_ssig(signal));
}

SurfaceSignal read_ssig(const std::filesystem::path& path) {
  return decode_ssig(io::read_file(path));
}

void write_patch_table(const std::filesystem::path& path, const PatchTable& table) {
  io::ByteWriter out;
  out.line("SPTAB " + std::to_string(kTableVersion));
  out.line("high_order " + std::to_string(table.high_order));
  out.line("patch_order " + std::to_string(table.patch_order));
  out.line("patches " + std::to_string(table.patch_count));
  out.line("vertices_per_patch " + std::to_string(table.vertices_per_patch));
  out.line("mesh_vertices " + std::to_string(table.mesh_vertex_count));
  out.line("end");
  for (auto idx : table.indices) out.put(idx);
  io::write_file(path, out.bytes());
}

PatchTable read_patch_table(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes, path.string());
  in.expect_magic("SPTAB", kTableVersion);
  PatchTable table;
  table.high_order = static_cast<int>(in.expect_int("high_order"));
  table.patch_order = static_cast<int>(in.expect_int("patch_order"));
  table.patch_count = checked_count(in, "patches", 1LL << 32);
  table.vertices_per_patch = checked_count(in, "vertices_per_patch", 1LL << 32);
  table.mesh_vertex_count = checked_count(in, "mesh_vertices", 1LL << 32);
  in.expect_end();
  in.require(table.patch_count * table.vertices_per_patch * sizeof(std::uint32_t));
  table.indices.resize(table.patch_count * table.vertices_per_patch);
  for (auto& idx : table.indices) {
    idx = in.get<std::uint32_t>();
    if (idx >= table.mesh_vertex_count) in.fail("vertex index out of range");
  }
  in.expect_eof();
  return table;
}

}  // namespace sit::geometry
