#include "sit/training/confound.hpp"

#include <cmath>
#include <cstdio>

#include "sit/errors.hpp"

namespace sit::training {

std::vector<double> ConfoundEncoder::normalize(std::span<const double> values, bool training) {
  if (values.empty()) return {};
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("non-finite confound value");
  double mean = running_mean, var = running_var;
  if (training) {
    const auto n = static_cast<double>(values.size());
    mean = 0;
    for (double v : values) mean += v;
    mean /= n;
    var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n;
    running_mean = (1 - momentum) * running_mean + momentum * mean;
    if (values.size() > 1) running_var = (1 - momentum) * running_var + momentum * var * n / (n - 1);
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - mean) / std::sqrt(var + eps));
  return out;
}

template <typename T>
ad::Var<T> ConfoundEncoder::encode(model::Pass<T>& pass, const model::SiTModel<T>& model, double normalized) const {
  const auto& ix = model.index();
  if (!ix.confound_w) throw ConfigError("model was built without a confound projection");
  auto z = pass.tape().constant(ad::Array<T>(1, 1, static_cast<T>(normalized)));
  return ad::linear(z, pass.param(*ix.confound_w), pass.param(*ix.confound_b));
}

void ConfoundEncoder::save(ad::Checkpoint& ckpt) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", running_mean);
  ckpt.set_record("confound_mean", buf);
  std::snprintf(buf, sizeof buf, "%.17g", running_var);
  ckpt.set_record("confound_var", buf);
}

void ConfoundEncoder::load(const ad::Checkpoint& ckpt) {
  const auto m = ckpt.record("confound_mean");
  const auto v = ckpt.record("confound_var");
  if (!m || !v) throw DataError("checkpoint lacks confound statistics");
  try {
    running_mean = std::stod(*m);
    running_var = std::stod(*v);
  } catch (const std::logic_error&) {
    throw DataError("checkpoint confound statistics are not numbers");
  }
}

template ad::Var<float> ConfoundEncoder::encode(model::Pass<float>&, const model::SiTModel<float>&, double) const;
template ad::Var<double> ConfoundEncoder::encode(model::Pass<double>&, const model::SiTModel<double>&, double) const;

}  // namespace sit::training
