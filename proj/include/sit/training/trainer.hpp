#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sit/autodiff/checkpoint.hpp"
#include "sit/config.hpp"
#include "sit/data/dataset.hpp"
#include "sit/model/sit_model.hpp"
#include "sit/training/confound.hpp"
#include "sit/training/mpp.hpp"
#include "sit/training/optim.hpp"

namespace sit::training {

enum class Task { pma, ga };

struct TrainConfig {
  Task task = Task::pma;
  model::SiTConfig model = model::SiTConfig::tiny();
  OptimizerConfig optimizer;
  MppCorruption corruption;
  std::string label = "scan_age";  // or birth_age
  std::uint64_t seed = 0;
  bool deconfound = false;
  bool freeze_backbone = false;
  bool keep_mpp_head = false;
  std::size_t threads = 0;           // 0: all hardware threads
  double time_budget_minutes = 0.0;  // 0: unlimited
  int mesh_order = 6;                // icosphere order of the input signals
  int patch_order = 2;               // patches = faces of this order
  std::filesystem::path manifest;
  std::filesystem::path output_dir;

  void validate() const;
};

enum class RunKind { scratch, fine_tune, pretrain };

// Every accepted key with a one-line description (for --help).
const std::vector<std::pair<std::string, std::string>>& train_config_keys();

// Builds a config from key=value pairs. Unset optimiser keys default to the
// task's row of the training-strategy table for the given run kind.
TrainConfig train_config_from(const KeyValues& kv, RunKind kind);
// Fully resolved key=value snapshot of a config.
KeyValues resolved_keys(const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_mae = 0;  // weeks; masked reconstruction MAE when pretraining
  double lr = 0;
  double wall_seconds = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  double baseline_mae = std::numeric_limits<double>::quiet_NaN();  // predict-the-training-mean
  bool budget_exhausted = false;
  ad::Checkpoint best;
  ad::Checkpoint last;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Fresh model (seeded init) or one initialised from a checkpoint; the
// checkpoint's architecture wins over the config's.
model::SiTModel<float> make_model(const TrainConfig& config, RunKind kind, const ad::Checkpoint* from = nullptr);

// Phenotype regression on the train split, validated on val.
TrainResult train(const data::Dataset& data, model::SiTModel<float>& model, const TrainConfig& config,
                  const EpochCallback& on_epoch = {}, const ad::Checkpoint* from = nullptr);

// Masked patch prediction on the train split.
TrainResult pretrain_mpp(const data::Dataset& data, model::SiTModel<float>& model, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

// Regression inference from a training checkpoint.
class Predictor {
 public:
  explicit Predictor(const ad::Checkpoint& ckpt);

  double predict(const data::Example& example, model::AttentionRecord* record = nullptr) const;
  const model::SiTModel<float>& model() const { return model_; }
  const std::string& label() const { return label_; }

 private:
  model::SiTModel<float> model_;
  ConfoundEncoder confound_;
  bool deconfound_ = false;
  double label_mean_ = 0, label_std_ = 1;
  std::string label_;
};

double label_of(const data::Example& example, const std::string& label);

struct SubjectScore {
  std::vector<std::string> subjects;
  std::vector<double> predictions;  // mean over hemispheres
  std::vector<double> targets;
  double mae = 0;
};
// Groups per-example predictions by subject (in first-seen order).
SubjectScore score_subjects(const data::Dataset& data, std::span<const std::size_t> indices,
                            std::span<const double> predictions, const std::string& label);

// Appends one metrics row; writes the header when the file is new.
void append_metrics(const std::filesystem::path& csv, const EpochMetrics& m);

// Runs fn(i, worker) for i in [0, n) with a static round-robin split over
// `threads` workers (0 = hardware concurrency). Rethrows the first error.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn);
std::size_t resolve_threads(std::size_t threads);

}  // namespace sit::training
