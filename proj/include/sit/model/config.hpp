#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sit/autodiff/array.hpp"

namespace sit::model {

struct SiTConfig {
  std::string variant = "tiny";
  std::size_t layers = 12;
  std::size_t heads = 3;
  std::size_t hidden = 192;
  std::size_t mlp = 768;
  std::size_t patch_dim = 612;
  std::size_t seq_len = 320;
  double dropout = 0.0;
  bool mpp_head = false;        // mask token + reconstruction head
  std::size_t confound_tokens = 0;  // 0 or 1 linear confound projections

  std::size_t head_dim() const { return hidden / heads; }
  // Throws ConfigError on inconsistent sizes.
  void validate() const;

  static SiTConfig tiny();
  static SiTConfig small();
  static SiTConfig base();
  // "tiny" | "small" | "base"
  static SiTConfig named(const std::string& variant);
};

// Name and shape of every learnable tensor, in a fixed order.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const SiTConfig& config);

// Exact number of learnable scalars.
std::size_t param_count(const SiTConfig& config);

}  // namespace sit::model
