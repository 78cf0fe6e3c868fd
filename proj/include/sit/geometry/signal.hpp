#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sit::geometry {

// Per-vertex, multi-channel data on a sphere mesh, stored vertex-major
// ([vertex][channel]).
struct SurfaceSignal {
  std::size_t vertex_count = 0;
  std::size_t channels = 0;
  std::vector<std::string> channel_names;
  std::vector<double> values;

  SurfaceSignal() = default;
  SurfaceSignal(std::size_t vertices, std::size_t channel_count)
      : vertex_count(vertices), channels(channel_count), values(vertices * channel_count, 0.0) {}

  double& at(std::size_t vertex, std::size_t channel) { return values[vertex * channels + channel]; }
  double at(std::size_t vertex, std::size_t channel) const {
    return values[vertex * channels + channel];
  }
  std::span<const double> row(std::size_t vertex) const {
    return {values.data() + vertex * channels, channels};
  }

  // Throws DataError on shape mismatch or non-finite values.
  void validate() const;
};

// Flattened patch tokens of one hemisphere, [patch_count x token_length]
// row-major, token_length = vertices_per_patch * channels. Stored in float32,
// the precision of the on-disk signals.
struct PatchSequence {
  std::size_t patch_count = 0;
  std::size_t vertices_per_patch = 0;
  std::size_t channels = 0;
  std::vector<float> tokens;
  std::string subject;
  std::string hemisphere;

  std::size_t token_length() const { return vertices_per_patch * channels; }
  std::span<const float> token(std::size_t i) const {
    return {tokens.data() + i * token_length(), token_length()};
  }
  std::span<float> token(std::size_t i) { return {tokens.data() + i * token_length(), token_length()}; }
};

}  // namespace sit::geometry
