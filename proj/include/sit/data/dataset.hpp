#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sit/autodiff/array.hpp"
#include "sit/autodiff/checkpoint.hpp"
#include "sit/config.hpp"
#include "sit/geometry/patches.hpp"
#include "sit/geometry/signal.hpp"

namespace sit::data {

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

// Synthetic stand-in for cortical feature maps. Every channel is a sum of
// smooth von Mises-Fisher bumps with centres spread over the whole sphere:
//   age bumps        amplitude w_k * (age_gain * scan_age + age_offset)
//   preterm bumps    amplitude w_k * preterm_gain * (scan_age - birth_age)
//   distractors      amplitude ~ N(0, distractor_std), per subject and side
// plus i.i.d. Gaussian vertex noise. w_k are fixed signed weights drawn from
// the seed. With the default gain/offset the age term spans [0, 1].
struct SyntheticSpec {
  std::size_t subjects = 512;
  double age_min = 28.0;  // weeks
  double age_max = 44.0;
  std::size_t channels = 4;
  std::size_t basis_per_channel = 6;
  std::size_t age_bumps = 2;      // per channel
  std::size_t preterm_bumps = 1;  // per channel
  double kappa = 12.0;            // bump concentration
  double noise_std = 0.1;
  double distractor_std = 0.5;
  double preterm_fraction = 0.3;
  double preterm_offset_min = 4.0;  // weeks between birth and scan
  double preterm_offset_max = 12.0;
  double preterm_gain = 0.15;  // per week of prematurity
  double age_gain = 1.0 / 16.0;
  double age_offset = -28.0 / 16.0;
  bool unit_weights = false;  // w_k = 1 instead of random signed weights
  int order = 6;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
};

struct ManifestRow {
  std::string subject;
  std::string hemi;  // "L" or "R"
  std::filesystem::path path;
  double scan_age = 0;
  double birth_age = 0;
  Split split = Split::train;
};

// CSV: subject,hemi,path,scan_age,birth_age,split. Relative paths are
// resolved against the manifest's directory on read.
struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::size_t count(Split split) const;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Deterministic 80/10/10 assignment of distinct subject ids.
std::vector<Split> assign_splits(std::size_t subjects, std::uint64_t seed);

// Fixed basis of the spec, [vertex][basis] with basis = channel *
// basis_per_channel + k, on the icosphere of spec.order.
struct SyntheticBasis {
  std::size_t vertex_count = 0;
  std::size_t count = 0;
  std::vector<double> values;  // vertex-major
  std::vector<double> weights;  // w_k
  double at(std::size_t vertex, std::size_t k) const { return values[vertex * count + k]; }
};
SyntheticBasis synthetic_basis(const SyntheticSpec& spec);

struct SubjectDraw {
  double scan_age = 0;
  double birth_age = 0;
};

// Writes <dir>/signals/<subject>_<hemi>.ssig for both hemispheres of every
// subject plus <dir>/manifest.csv. Right hemispheres are stored in their
// native (mirrored) orientation, so loading re-aligns them with the left.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

// One hemisphere's signal for a subject in template (left) orientation.
geometry::SurfaceSignal synthesize_hemisphere(const SyntheticSpec& spec, const SyntheticBasis& basis,
                                              const SubjectDraw& draw, std::uint64_t stream);

// Per-channel z-scoring statistics.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std, floored at epsilon
  std::vector<std::uint8_t> constant;  // channels whose std hit the floor
  static constexpr double epsilon = 1e-8;
};

// Streaming per-channel moments over every vertex of the signals added.
class NormalizationAccumulator {
 public:
  void add(const geometry::SurfaceSignal& signal);
  // Warns on std::clog for constant channels.
  Normalization result() const;

 private:
  std::size_t channels_ = 0;
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

Normalization compute_normalization(std::span<const geometry::SurfaceSignal> signals);
// (x - mean) / std, channel by channel.
void apply_normalization(geometry::SurfaceSignal& signal, const Normalization& norm);

// Reads a signal, mirrors right hemispheres into the left orientation.
geometry::SurfaceSignal load_signal(const ManifestRow& row);

struct Example {
  std::string subject;
  std::string hemi;
  Split split = Split::train;
  double scan_age = 0;
  double birth_age = 0;
  ad::Array<float> tokens;  // patch_count x token_length, channel-major tokens
};

// Mirroring (right hemispheres), optional normalization and patch
// extraction.
Example load_example(const ManifestRow& row, const geometry::PatchTable& table, const Normalization* norm);

struct Dataset {
  std::vector<Example> examples;
  Normalization normalization;
  bool normalized = false;  // guards against normalising twice

  std::vector<std::size_t> indices(Split split) const;
};

// Loads every manifest row. With normalize, statistics come from the
// training split only and are applied before extraction.
Dataset load_dataset(const DatasetManifest& manifest, const geometry::PatchTable& table, bool normalize = true);

// Normalises the tokens of a raw dataset in place (tokens are channel-major,
// so each channel block is shifted and scaled). StateError when the
// dataset is already normalised.
void normalize_dataset(Dataset& dataset, const Normalization& norm, std::size_t vertices_per_patch);

// key = value form of a SyntheticSpec. Unknown keys are a ConfigError.
const std::vector<std::pair<std::string, std::string>>& synthetic_spec_keys();
SyntheticSpec synthetic_spec_from(const KeyValues& kv);
KeyValues resolved_keys(const SyntheticSpec& spec);

// Normalization statistics travel with checkpoints so that inference sees
// the training-split scaling.
void save_normalization(ad::Checkpoint& ckpt, const Normalization& norm);
Normalization load_normalization(const ad::Checkpoint& ckpt);

}  // namespace sit::data
