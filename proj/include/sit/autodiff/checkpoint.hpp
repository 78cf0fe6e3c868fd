#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sit/autodiff/array.hpp"

namespace sit::ad {

// SITCKPT v1
//   SITCKPT 1
//   records <R>
//   <key> <value>        (R lines; describe the model configuration)
//   tensors <T>
//   tensor <name> <rows> <cols>   (T lines)
//   end
//   payloads in header order, float32 little-endian, row-major
struct CheckpointTensor {
  std::string name;
  Array<float> value;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> records;
  std::vector<CheckpointTensor> tensors;

  void set_record(const std::string& key, const std::string& value);
  std::optional<std::string> record(const std::string& key) const;
  const CheckpointTensor* tensor(const std::string& name) const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sit::ad
