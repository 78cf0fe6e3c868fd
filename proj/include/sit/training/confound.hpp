#pragma once

#include <span>
#include <vector>

#include "sit/autodiff/checkpoint.hpp"
#include "sit/model/sit_model.hpp"

namespace sit::training {

// Batch-normalised scalar confound (scan age, weeks) projected to a D-vector
// by the model's "confound.weight"/"confound.bias" tensors.
struct ConfoundEncoder {
  double running_mean = 0.0;
  double running_var = 1.0;
  double momentum = 0.1;
  static constexpr double eps = 1e-5;

  // Training: batch statistics (biased variance), then running statistics
  // are updated with the unbiased batch variance. Eval: running statistics.
  std::vector<double> normalize(std::span<const double> values, bool training);

  // One 1 x D token for an already normalised value.
  template <typename T>
  ad::Var<T> encode(model::Pass<T>& pass, const model::SiTModel<T>& model, double normalized) const;

  void save(ad::Checkpoint& ckpt) const;
  void load(const ad::Checkpoint& ckpt);
};

}  // namespace sit::training
