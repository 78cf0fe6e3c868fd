#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sit/autodiff/ops.hpp"

namespace sit::training {

using ad::Array;
using ad::Var;

// Masked patch prediction corruption: each position is selected with
// mask_prob; a selected position is replaced by the mask token, by another
// position's embedding, or kept, with the given action probabilities.
struct MppCorruption {
  double mask_prob = 0.5;
  double p_mask_token = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;

  void validate() const;  // ConfigError
};

enum class CorruptAction : std::uint8_t { none, mask_token, random_patch, keep };

struct CorruptionPlan {
  std::vector<CorruptAction> actions;
  // Row of [embeddings; mask_token] feeding each output position.
  std::vector<std::uint32_t> source;
  std::vector<std::uint8_t> mask;  // 1 at every corrupted position

  std::size_t corrupted() const;
};

CorruptionPlan plan_corruption(std::size_t positions, const MppCorruption& corruption, ad::Rng& rng);

// Applies a plan to projected patch embeddings [N x D] (before positional
// embeddings). "Random" positions copy another position's clean embedding.
template <typename T>
Var<T> corrupt_sequence(Var<T> embedded, Var<T> mask_token, const CorruptionPlan& plan);

// MSE over the masked rows only; DataError when nothing is masked.
template <typename T>
Var<T> mpp_loss(Var<T> reconstruction, const Array<T>& target, std::span<const std::uint8_t> mask);

// Reporting helpers on plain numbers.
double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);

}  // namespace sit::training
