#include "sit/training/optim.hpp"

#include <cmath>
#include <numbers>

#include "sit/errors.hpp"

namespace sit::training {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

Scheduler parse_scheduler(const std::string& name) {
  if (name == "none") return Scheduler::none;
  if (name == "cosine") return Scheduler::cosine;
  throw ConfigError("unknown scheduler '" + name + "' (expected none or cosine)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }
std::string to_string(Scheduler s) { return s == Scheduler::none ? "none" : "cosine"; }

void OptimizerConfig::validate() const {
  // lr = 0 is accepted: it freezes training, which is a useful check
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite value >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (warmup_epochs > epochs) throw ConfigError("warmup_epochs exceeds the number of epochs");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0))
    throw ConfigError("invalid Adam hyper-parameters");
}

LrSchedule::LrSchedule(double base_lr, std::size_t warmup_steps, std::size_t total_steps, Scheduler scheduler)
    : base_(base_lr), warmup_(warmup_steps), total_(total_steps), scheduler_(scheduler) {
  if (warmup_ > total_) throw ConfigError("warm-up longer than training");
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_) return base_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (scheduler_ == Scheduler::none || total_ <= warmup_) return base_;
  const double t = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_));
  return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename T>
Optimizer<T>::Optimizer(const OptimizerConfig& config, const ad::ParameterSet<T>& params) : config_(config) {
  config_.validate();
  if (config_.kind == OptimizerKind::adam) {
    m_ = ad::zero_gradients(params);
    v_ = ad::zero_gradients(params);
  }
}

template <typename T>
void Optimizer<T>::step(ad::ParameterSet<T>& params, const ad::Gradients<T>& grads, double lr,
                        std::span<const std::uint8_t> trainable) {
  if (grads.size() != params.size()) throw ShapeError("gradient list does not match the parameters");
  auto active = [&](std::size_t i) { return trainable.empty() || trainable[i] != 0; };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active(i)) continue;
    if (grads[i].shape() != params[i].value.shape())
      throw ShapeError("gradient of '" + params[i].name + "' is " + grads[i].shape().str());
    if (!grads[i].mat().allFinite()) throw NumericError("non-finite gradient in tensor '" + params[i].name + "'");
  }
  ++steps_;
  const T rate = static_cast<T>(lr);
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (active(i)) params[i].value.mat() -= rate * grads[i].mat();
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const auto step_size = static_cast<T>(lr / c1);
  const auto root_c2 = static_cast<T>(std::sqrt(c2));
  const auto eps = static_cast<T>(config_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active(i)) continue;
    auto m = m_[i].mat();
    auto v = v_[i].mat();
    const auto g = grads[i].mat();
    auto p = params[i].value.mat();
    m = static_cast<T>(b1) * m + static_cast<T>(1 - b1) * g;
    v.array() = static_cast<T>(b2) * v.array() + static_cast<T>(1 - b2) * g.array().square();
    // p -= lr * m_hat / (sqrt(v_hat) + eps)
    p.array() -= step_size * m.array() / (v.array().sqrt() / root_c2 + eps);
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace sit::training
