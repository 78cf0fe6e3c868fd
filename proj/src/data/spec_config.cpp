#include <cstdio>
#include <set>
#include <sstream>

#include "sit/data/dataset.hpp"
#include "sit/errors.hpp"

namespace sit::data {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

std::vector<double> split_numbers(const std::string& text, const char* key) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw DataError(std::string("checkpoint record '") + key + "' holds a malformed number");
    }
  }
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& synthetic_spec_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"subjects", "number of subjects, two hemispheres each (default 512)"},
      {"age_min", "lower bound of scan age in weeks (default 28)"},
      {"age_max", "upper bound of scan age in weeks (default 44)"},
      {"channels", "feature channels per vertex (default 4)"},
      {"basis_per_channel", "smooth bumps per channel (default 6)"},
      {"age_bumps", "bumps per channel whose amplitude follows scan age (default 2)"},
      {"preterm_bumps", "bumps per channel that follow weeks of prematurity (default 1)"},
      {"kappa", "bump concentration (default 12)"},
      {"noise_std", "i.i.d. vertex noise (default 0.1)"},
      {"distractor_std", "std of label-independent bump amplitudes (default 0.5)"},
      {"preterm_fraction", "share of subjects born preterm (default 0.3)"},
      {"preterm_offset_min", "minimum weeks between birth and scan for preterm subjects (default 4)"},
      {"preterm_offset_max", "maximum weeks between birth and scan (default 12)"},
      {"preterm_gain", "amplitude per week of prematurity (default 0.15)"},
      {"age_gain", "amplitude per week of scan age (default 0.0625)"},
      {"age_offset", "amplitude offset of the age bumps (default -1.75)"},
      {"unit_weights", "1 to give every bump weight +1 (default 0)"},
      {"order", "icosphere order of the signals (default 6)"},
      {"seed", "generator seed (default 0)"},
  };
  return keys;
}

SyntheticSpec synthetic_spec_from(const KeyValues& kv) {
  std::set<std::string> known;
  for (const auto& [k, d] : synthetic_spec_keys()) known.insert(k);
  kv.reject_unknown(known);
  SyntheticSpec s;
  s.subjects = kv.integer("subjects", s.subjects);
  s.age_min = kv.real("age_min", s.age_min);
  s.age_max = kv.real("age_max", s.age_max);
  s.channels = kv.integer("channels", s.channels);
  s.basis_per_channel = kv.integer("basis_per_channel", s.basis_per_channel);
  s.age_bumps = kv.integer("age_bumps", s.age_bumps);
  s.preterm_bumps = kv.integer("preterm_bumps", s.preterm_bumps);
  s.kappa = kv.real("kappa", s.kappa);
  s.noise_std = kv.real("noise_std", s.noise_std);
  s.distractor_std = kv.real("distractor_std", s.distractor_std);
  s.preterm_fraction = kv.real("preterm_fraction", s.preterm_fraction);
  s.preterm_offset_min = kv.real("preterm_offset_min", s.preterm_offset_min);
  s.preterm_offset_max = kv.real("preterm_offset_max", s.preterm_offset_max);
  s.preterm_gain = kv.real("preterm_gain", s.preterm_gain);
  s.age_gain = kv.real("age_gain", s.age_gain);
  s.age_offset = kv.real("age_offset", s.age_offset);
  s.unit_weights = kv.flag("unit_weights", s.unit_weights);
  s.order = static_cast<int>(kv.integer("order", static_cast<std::uint64_t>(s.order)));
  s.seed = kv.integer("seed", s.seed);
  s.validate();
  return s;
}

KeyValues resolved_keys(const SyntheticSpec& s) {
  KeyValues kv;
  kv.set("subjects", std::to_string(s.subjects));
  kv.set("age_min", fmt(s.age_min));
  kv.set("age_max", fmt(s.age_max));
  kv.set("channels", std::to_string(s.channels));
  kv.set("basis_per_channel", std::to_string(s.basis_per_channel));
  kv.set("age_bumps", std::to_string(s.age_bumps));
  kv.set("preterm_bumps", std::to_string(s.preterm_bumps));
  kv.set("kappa", fmt(s.kappa));
  kv.set("noise_std", fmt(s.noise_std));
  kv.set("distractor_std", fmt(s.distractor_std));
  kv.set("preterm_fraction", fmt(s.preterm_fraction));
  kv.set("preterm_offset_min", fmt(s.preterm_offset_min));
  kv.set("preterm_offset_max", fmt(s.preterm_offset_max));
  kv.set("preterm_gain", fmt(s.preterm_gain));
  kv.set("age_gain", fmt(s.age_gain));
  kv.set("age_offset", fmt(s.age_offset));
  kv.set("unit_weights", s.unit_weights ? "1" : "0");
  kv.set("order", std::to_string(s.order));
  kv.set("seed", std::to_string(s.seed));
  return kv;
}

void save_normalization(ad::Checkpoint& ckpt, const Normalization& norm) {
  ckpt.set_record("norm_mean", join(norm.mean));
  ckpt.set_record("norm_std", join(norm.stddev));
  std::vector<double> constant(norm.constant.begin(), norm.constant.end());
  ckpt.set_record("norm_constant", join(constant));
}

Normalization load_normalization(const ad::Checkpoint& ckpt) {
  const auto m = ckpt.record("norm_mean");
  const auto s = ckpt.record("norm_std");
  if (!m || !s) throw DataError("checkpoint carries no normalization statistics");
  Normalization n;
  n.mean = split_numbers(*m, "norm_mean");
  n.stddev = split_numbers(*s, "norm_std");
  if (n.mean.size() != n.stddev.size()) throw DataError("normalization records disagree in length");
  n.constant.assign(n.mean.size(), 0);
  if (const auto c = ckpt.record("norm_constant")) {
    const auto flags = split_numbers(*c, "norm_constant");
    for (std::size_t i = 0; i < std::min(flags.size(), n.constant.size()); ++i) n.constant[i] = flags[i] != 0;
  }
  for (double v : n.stddev)
    if (!(v > 0)) throw DataError("normalization std must be positive");
  return n;
}

}  // namespace sit::data
