#include "sit/training/mpp.hpp"

#include <cmath>
#include <random>

#include "sit/errors.hpp"

namespace sit::training {

void MppCorruption::validate() const {
  if (!(mask_prob >= 0 && mask_prob <= 1)) throw ConfigError("mask_prob must lie in [0, 1]");
  for (double p : {p_mask_token, p_random, p_keep})
    if (!(p >= 0)) throw ConfigError("corruption action probabilities must be non-negative");
  if (std::abs(p_mask_token + p_random + p_keep - 1.0) > 1e-12)
    throw ConfigError("corruption action probabilities must sum to 1");
}

std::size_t CorruptionPlan::corrupted() const {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

CorruptionPlan plan_corruption(std::size_t positions, const MppCorruption& c, ad::Rng& rng) {
  c.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CorruptionPlan plan;
  plan.actions.resize(positions, CorruptAction::none);
  plan.source.resize(positions);
  plan.mask.resize(positions, 0);
  const auto mask_row = static_cast<std::uint32_t>(positions);
  for (std::size_t i = 0; i < positions; ++i) {
    plan.source[i] = static_cast<std::uint32_t>(i);
    if (!(unit(rng) < c.mask_prob)) continue;
    plan.mask[i] = 1;
    const double u = unit(rng);
    if (u < c.p_mask_token) {
      plan.actions[i] = CorruptAction::mask_token;
      plan.source[i] = mask_row;
    } else if (u < c.p_mask_token + c.p_random && positions > 1) {
      plan.actions[i] = CorruptAction::random_patch;
      // uniform over the other positions
      auto j = std::uniform_int_distribution<std::size_t>(0, positions - 2)(rng);
      if (j >= i) ++j;
      plan.source[i] = static_cast<std::uint32_t>(j);
    } else {
      plan.actions[i] = CorruptAction::keep;
    }
  }
  return plan;
}

template <typename T>
Var<T> corrupt_sequence(Var<T> embedded, Var<T> mask_token, const CorruptionPlan& plan) {
  if (plan.source.size() != embedded.shape().rows)
    throw ShapeError("corruption plan for " + std::to_string(plan.source.size()) + " positions applied to " +
                     embedded.shape().str());
  if (plan.corrupted() == 0) return embedded;
  const Var<T> rows[] = {embedded, mask_token};
  return ad::gather_rows<T>(ad::concat_rows<T>(rows), plan.source);
}

template <typename T>
Var<T> mpp_loss(Var<T> reconstruction, const Array<T>& target, std::span<const std::uint8_t> mask) {
  if (mask.size() != reconstruction.shape().rows)
    throw ShapeError("mask of length " + std::to_string(mask.size()) + " for reconstruction " +
                     reconstruction.shape().str());
  return ad::mse(reconstruction, target, mask);
}

namespace {
void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("prediction/target lengths differ");
  if (a.empty()) throw DataError("no predictions to score");
}
}  // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

template Var<float> corrupt_sequence(Var<float>, Var<float>, const CorruptionPlan&);
template Var<double> corrupt_sequence(Var<double>, Var<double>, const CorruptionPlan&);
template Var<float> mpp_loss(Var<float>, const Array<float>&, std::span<const std::uint8_t>);
template Var<double> mpp_loss(Var<double>, const Array<double>&, std::span<const std::uint8_t>);

}  // namespace sit::training
