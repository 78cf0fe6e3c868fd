#include "sit/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "sit/errors.hpp"
#include "sit/geometry/icosphere.hpp"
#include "sit/geometry/io.hpp"
#include "sit/geometry/resample.hpp"
#include "sit/io/binary.hpp"
#include "sit/random.hpp"

namespace sit::data {

using geometry::Icosphere;
using geometry::SurfaceSignal;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + text + "' (expected train, val or test)");
}

void SyntheticSpec::validate() const {
  if (subjects == 0) throw ConfigError("synthetic spec needs at least one subject");
  if (!(age_min < age_max)) throw ConfigError("synthetic spec needs age_min < age_max");
  if (channels == 0 || basis_per_channel == 0) throw ConfigError("synthetic spec needs channels and basis functions");
  if (age_bumps + preterm_bumps > basis_per_channel)
    throw ConfigError("age_bumps + preterm_bumps exceed basis_per_channel");
  if (!(noise_std >= 0) || !(distractor_std >= 0)) throw ConfigError("noise levels must be non-negative");
  if (!(preterm_fraction >= 0 && preterm_fraction <= 1)) throw ConfigError("preterm_fraction must lie in [0, 1]");
  if (!(preterm_offset_min >= 0 && preterm_offset_min <= preterm_offset_max))
    throw ConfigError("preterm offsets need 0 <= min <= max");
  if (!(kappa > 0)) throw ConfigError("bump concentration kappa must be positive");
  if (order < 0 || order > Icosphere::kMaxOrder) throw ConfigError("synthetic mesh order out of range");
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const auto& r) { return r.split == split; }));
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& what, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::logic_error&) {
  }
  throw DataError("manifest line " + std::to_string(line) + ": bad " + what + " '" + text + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

constexpr const char* kManifestHeader = "subject,hemi,path,scan_age,birth_age,split";

// Icospheres are expensive to rebuild at order 6; share one per order.
const Icosphere& shared_icosphere(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Icosphere>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<Icosphere>(order);
  return *slot;
}

int order_for_vertices(std::size_t vertices) {
  for (int k = 0; k <= Icosphere::kMaxOrder; ++k)
    if (Icosphere::expected_vertices(k) == vertices) return k;
  throw DataError("signal with " + std::to_string(vertices) + " vertices is not on an icosphere");
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.rows) {
    const std::string p = r.path.generic_string();
    for (const auto* field : {&r.subject, &r.hemi, &p})
      if (field->find_first_of(",\n") != std::string::npos)
        throw DataError("manifest field '" + *field + "' contains a separator");
    out << r.subject << ',' << r.hemi << ',' << p << ',' << format_double(r.scan_age) << ','
        << format_double(r.birth_age) << ',' << to_string(r.split) << '\n';
  }
  const auto text = out.str();
  io::write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw DataError("manifest " + path.string() + " must start with '" + kManifestHeader + "'");
  DatasetManifest m;
  const auto base = path.parent_path();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6)
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 6 fields, got " + std::to_string(f.size()));
    ManifestRow r;
    r.subject = f[0];
    r.hemi = f[1];
    if (r.hemi != "L" && r.hemi != "R")
      throw DataError("manifest line " + std::to_string(lineno) + ": hemisphere must be L or R");
    r.path = f[2];
    if (r.path.is_relative()) r.path = base / r.path;
    r.scan_age = parse_double(f[3], "scan_age", lineno);
    r.birth_age = parse_double(f[4], "birth_age", lineno);
    r.split = parse_split(f[5]);
    m.rows.push_back(std::move(r));
  }
  // a subject must never straddle splits
  std::map<std::string, Split> seen;
  for (const auto& r : m.rows) {
    auto [it, inserted] = seen.emplace(r.subject, r.split);
    if (!inserted && it->second != r.split)
      throw DataError("subject " + r.subject + " appears in more than one split");
  }
  return m;
}

std::vector<Split> assign_splits(std::size_t subjects, std::uint64_t seed) {
  std::vector<std::size_t> order(subjects);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0x5b1u}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(subjects)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(subjects)));
  std::vector<Split> out(subjects, Split::test);
  for (std::size_t i = 0; i < subjects; ++i) {
    const auto s = order[i];
    out[s] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }
  return out;
}

SyntheticBasis synthetic_basis(const SyntheticSpec& spec) {
  spec.validate();
  const auto& mesh = shared_icosphere(spec.order);
  SyntheticBasis b;
  b.vertex_count = mesh.vertex_count();
  b.count = spec.channels * spec.basis_per_channel;
  std::mt19937_64 rng(derive_seed(spec.seed, {0xba5e}));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::vector<geometry::Vec3> centres;
  for (std::size_t k = 0; k < b.count; ++k) {
    geometry::Vec3 c;
    do {
      c = {normal(rng), normal(rng), normal(rng)};
    } while (c.norm() < 1e-6);
    centres.push_back(c.normalized());
    const double sign = rng() & 1 ? 1.0 : -1.0;
    const double w = sign * magnitude(rng);
    b.weights.push_back(spec.unit_weights ? 1.0 : w);
  }
  b.values.resize(b.vertex_count * b.count);
  const auto verts = mesh.vertices();
  for (std::size_t v = 0; v < b.vertex_count; ++v)
    for (std::size_t k = 0; k < b.count; ++k)
      b.values[v * b.count + k] = std::exp(spec.kappa * (verts[v].dot(centres[k]) - 1.0));
  return b;
}

SurfaceSignal synthesize_hemisphere(const SyntheticSpec& spec, const SyntheticBasis& basis, const SubjectDraw& draw,
                                    std::uint64_t stream) {
  std::mt19937_64 rng(stream);
  std::normal_distribution<double> normal;
  const std::size_t per = spec.basis_per_channel;
  std::vector<double> amp(basis.count);
  const double age_term = spec.age_gain * draw.scan_age + spec.age_offset;
  const double preterm_term = spec.preterm_gain * (draw.scan_age - draw.birth_age);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t i = c * per + k;
      if (k < spec.age_bumps)
        amp[i] = basis.weights[i] * age_term;
      else if (k < spec.age_bumps + spec.preterm_bumps)
        amp[i] = basis.weights[i] * preterm_term;
      else
        amp[i] = spec.distractor_std * normal(rng);
    }
  }
  SurfaceSignal s(basis.vertex_count, spec.channels);
  for (std::size_t c = 0; c < spec.channels; ++c) s.channel_names.push_back("feature" + std::to_string(c));
  for (std::size_t v = 0; v < basis.vertex_count; ++v) {
    for (std::size_t c = 0; c < spec.channels; ++c) {
      double x = 0;
      for (std::size_t k = 0; k < per; ++k) x += amp[c * per + k] * basis.at(v, c * per + k);
      if (spec.noise_std > 0) x += spec.noise_std * normal(rng);
      s.at(v, c) = x;
    }
  }
  return s;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  const auto basis = synthetic_basis(spec);
  const auto splits = assign_splits(spec.subjects, spec.seed);
  const auto& mesh = shared_icosphere(spec.order);
  DatasetManifest m;
  std::error_code ec;
  std::filesystem::create_directories(dir / "signals", ec);
  if (ec) throw IoError("cannot create " + (dir / "signals").string() + ": " + ec.message());
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    std::mt19937_64 rng(derive_seed(spec.seed, {1, s}));
    std::uniform_real_distribution<double> unit;
    SubjectDraw draw;
    draw.scan_age = spec.age_min + (spec.age_max - spec.age_min) * unit(rng);
    const bool preterm = unit(rng) < spec.preterm_fraction;
    const double offset = spec.preterm_offset_min + (spec.preterm_offset_max - spec.preterm_offset_min) * unit(rng);
    draw.birth_age = preterm ? draw.scan_age - offset : draw.scan_age;

    char id[32];
    std::snprintf(id, sizeof id, "sub-%04zu", s);
    for (int h = 0; h < 2; ++h) {
      const std::string hemi = h == 0 ? "L" : "R";
      auto signal = synthesize_hemisphere(spec, basis, draw, derive_seed(spec.seed, {2, s, static_cast<std::uint64_t>(h)}));
      if (h == 1) signal = geometry::mirror_signal(signal, mesh);
      const auto rel = std::filesystem::path("signals") / (std::string(id) + "_" + hemi + ".ssig");
      geometry::write_ssig(dir / rel, signal);
      m.rows.push_back({id, hemi, rel, draw.scan_age, draw.birth_age, splits[s]});
    }
  }
  write_manifest(dir / "manifest.csv", m);
  for (auto& r : m.rows) r.path = dir / r.path;
  return m;
}

void NormalizationAccumulator::add(const SurfaceSignal& signal) {
  if (n_ == 0 && mean_.empty()) {
    channels_ = signal.channels;
    mean_.assign(channels_, 0.0);
    m2_.assign(channels_, 0.0);
  } else if (signal.channels != channels_) {
    throw DataError("signal has " + std::to_string(signal.channels) + " channels, expected " +
                    std::to_string(channels_));
  }
  // Chan et al. pairwise merge of the signal's own moments
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0;
    for (std::size_t v = 0; v < signal.vertex_count; ++v) mean += signal.at(v, c);
    mean /= static_cast<double>(signal.vertex_count);
    double m2 = 0;
    for (std::size_t v = 0; v < signal.vertex_count; ++v) m2 += (signal.at(v, c) - mean) * (signal.at(v, c) - mean);
    const auto na = static_cast<double>(n_);
    const auto nb = static_cast<double>(signal.vertex_count);
    const double delta = mean - mean_[c];
    mean_[c] += delta * nb / (na + nb);
    m2_[c] += m2 + delta * delta * na * nb / (na + nb);
  }
  n_ += signal.vertex_count;
}

Normalization NormalizationAccumulator::result() const {
  if (n_ == 0) throw DataError("no training signals to compute normalization statistics from");
  Normalization out;
  out.mean = mean_;
  for (std::size_t c = 0; c < channels_; ++c) {
    const double sd = std::sqrt(m2_[c] / static_cast<double>(n_));
    const bool flat = !(sd > Normalization::epsilon);
    if (flat) std::clog << "warning: channel " << c << " is constant; normalization uses an epsilon std\n";
    out.stddev.push_back(flat ? Normalization::epsilon : sd);
    out.constant.push_back(flat ? 1 : 0);
  }
  return out;
}

Normalization compute_normalization(std::span<const SurfaceSignal> signals) {
  NormalizationAccumulator acc;
  for (const auto& s : signals) acc.add(s);
  return acc.result();
}

void apply_normalization(SurfaceSignal& signal, const Normalization& norm) {
  if (norm.mean.size() != signal.channels)
    throw DataError("normalization has " + std::to_string(norm.mean.size()) + " channels, signal has " +
                    std::to_string(signal.channels));
  for (std::size_t v = 0; v < signal.vertex_count; ++v)
    for (std::size_t c = 0; c < signal.channels; ++c)
      signal.at(v, c) = (signal.at(v, c) - norm.mean[c]) / norm.stddev[c];
}

SurfaceSignal load_signal(const ManifestRow& row) {
  auto signal = geometry::read_ssig(row.path);
  if (row.hemi == "R") signal = geometry::mirror_signal(signal, shared_icosphere(order_for_vertices(signal.vertex_count)));
  return signal;
}

Example load_example(const ManifestRow& row, const geometry::PatchTable& table, const Normalization* norm) {
  auto signal = load_signal(row);
  if (signal.vertex_count != table.mesh_vertex_count)
    throw DataError(row.path.string() + " has " + std::to_string(signal.vertex_count) +
                    " vertices but the patch table expects " + std::to_string(table.mesh_vertex_count));
  if (norm) apply_normalization(signal, *norm);
  const auto seq = geometry::extract_patches(signal, table);
  Example ex;
  ex.subject = row.subject;
  ex.hemi = row.hemi;
  ex.split = row.split;
  ex.scan_age = row.scan_age;
  ex.birth_age = row.birth_age;
  ex.tokens = ad::Array<float>(ad::Shape{seq.patch_count, seq.token_length()}, seq.tokens);
  return ex;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (examples[i].split == split) out.push_back(i);
  return out;
}

Dataset load_dataset(const DatasetManifest& manifest, const geometry::PatchTable& table, bool normalize) {
  Dataset ds;
  if (normalize) {
    NormalizationAccumulator acc;
    for (const auto& r : manifest.rows)
      if (r.split == Split::train) acc.add(load_signal(r));
    ds.normalization = acc.result();
    ds.normalized = true;
  }
  ds.examples.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows)
    ds.examples.push_back(load_example(r, table, normalize ? &ds.normalization : nullptr));
  return ds;
}

void normalize_dataset(Dataset& dataset, const Normalization& norm, std::size_t vertices_per_patch) {
  if (dataset.normalized) throw StateError("dataset is already normalized");
  for (auto& ex : dataset.examples) {
    if (ex.tokens.cols() != vertices_per_patch * norm.mean.size())
      throw DataError("token length " + std::to_string(ex.tokens.cols()) + " does not match " +
                      std::to_string(norm.mean.size()) + " channels of " + std::to_string(vertices_per_patch));
    for (std::size_t r = 0; r < ex.tokens.rows(); ++r) {
      auto row = ex.tokens.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        const auto c = j / vertices_per_patch;
        row[j] = static_cast<float>((row[j] - norm.mean[c]) / norm.stddev[c]);
      }
    }
  }
  dataset.normalization = norm;
  dataset.normalized = true;
}

}  // namespace sit::data
