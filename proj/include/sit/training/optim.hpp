#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "sit/autodiff/parameters.hpp"

namespace sit::training {

enum class OptimizerKind { sgd, adam };
enum class Scheduler { none, cosine };

OptimizerKind parse_optimizer(const std::string& name);
Scheduler parse_scheduler(const std::string& name);
std::string to_string(OptimizerKind kind);
std::string to_string(Scheduler scheduler);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 1e-4;
  std::size_t warmup_epochs = 50;
  Scheduler scheduler = Scheduler::none;
  std::size_t batch_size = 256;
  std::size_t epochs = 2000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;  // ConfigError
};

// Linear warm-up from 0 over warmup_steps, then constant or cosine decay to
// 0 at total_steps.
class LrSchedule {
 public:
  LrSchedule(double base_lr, std::size_t warmup_steps, std::size_t total_steps, Scheduler scheduler);
  double at(std::size_t step) const;

 private:
  double base_;
  std::size_t warmup_;
  std::size_t total_;
  Scheduler scheduler_;
};

// SGD (p -= lr g) or Adam with bias correction. Parameters masked out by
// `trainable` are left untouched, optimizer state included.
template <typename T>
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const ad::ParameterSet<T>& params);

  // Throws NumericError naming the first tensor with a non-finite gradient,
  // before modifying anything.
  void step(ad::ParameterSet<T>& params, const ad::Gradients<T>& grads, double lr,
            std::span<const std::uint8_t> trainable = {});
  std::size_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  ad::Gradients<T> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace sit::training
