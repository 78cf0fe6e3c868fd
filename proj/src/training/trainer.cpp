#include "sit/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sit/errors.hpp"
#include "sit/random.hpp"

namespace sit::training {

using model::Pass;
using model::SiTModel;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_record(const ad::Checkpoint& ckpt, const char* key) {
  const auto v = ckpt.record(key);
  if (!v) throw DataError(std::string("checkpoint lacks the '") + key + "' record");
  try {
    return std::stod(*v);
  } catch (const std::logic_error&) {
    throw DataError(std::string("checkpoint record '") + key + "' is not a number");
  }
}

// Stream tags for derive_seed; fixed so that logs stay reproducible.
enum : std::uint64_t { kInit = 11, kShuffle = 12, kExample = 13, kCorrupt = 14, kValCorrupt = 15 };

// Every step allocates and frees the same large activation buffers. glibc
// would serve each from a fresh mmap (page faults, kernel zeroing); keeping
// them on the heap roughly halves the cost of an op.
void keep_buffers_on_heap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

std::size_t resolve_threads(std::size_t threads) {
  if (threads > 0) return threads;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i, w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void TrainConfig::validate() const {
  model.validate();
  optimizer.validate();
  corruption.validate();
  if (label != "scan_age" && label != "birth_age")
    throw ConfigError("label must be scan_age or birth_age, got '" + label + "'");
  if (deconfound && model.confound_tokens != 1) throw ConfigError("deconfounding needs a confound token");
  if (!(time_budget_minutes >= 0)) throw ConfigError("time_budget_minutes must be >= 0");
  if (!(patch_order >= 0 && patch_order < mesh_order)) throw ConfigError("need 0 <= patch_order < mesh_order");
}

const std::vector<std::pair<std::string, std::string>>& train_config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"task", "pma (scan age) or ga (birth age); selects default label and optimiser"},
      {"variant", "tiny | small | base; overridden dimensions make the model 'custom'"},
      {"layers", "number of transformer blocks (default from variant)"},
      {"heads", "attention heads (default from variant)"},
      {"hidden", "embedding size D (default from variant)"},
      {"mlp", "FFN hidden size (default 4 * hidden)"},
      {"dropout", "dropout probability inside the FFN (default 0)"},
      {"optimizer", "sgd | adam (default: sgd for pma, adam for ga)"},
      {"lr", "base learning rate (default per task/run: 1e-4, 1e-5, 5e-4, 3e-4)"},
      {"warmup_epochs", "linear warm-up length in epochs (default 50 from scratch, 0 fine-tuning)"},
      {"scheduler", "none | cosine decay after warm-up (default none)"},
      {"batch_size", "examples per step (default 256/128/64 for tiny/small/base)"},
      {"epochs", "training epochs (default 2000 scratch, 1000 fine-tune)"},
      {"seed", "master seed for init, shuffling, dropout and corruption (default 0)"},
      {"mask_prob", "MPP corruption probability per patch (default 0.5)"},
      {"deconfound", "1 to append a batch-normalised scan-age token (default 0)"},
      {"freeze_backbone", "1 to train only the regression head (default 0)"},
      {"keep_mpp_head", "1 to keep mask token and MPP head when fine-tuning (default 0)"},
      {"label", "scan_age | birth_age (default from task)"},
      {"manifest", "dataset manifest CSV"},
      {"output_dir", "directory for checkpoints, metrics and the resolved config"},
      {"threads", "worker threads, 0 = all cores (default 0); 1 is bitwise reproducible"},
      {"time_budget_minutes", "stop after the epoch that would overrun this budget (0 = none)"},
      {"mesh_order", "icosphere order of the input signals (default 6)"},
      {"patch_order", "icosphere order whose faces define the patches (default 2)"},
  };
  return keys;
}

TrainConfig train_config_from(const KeyValues& kv, RunKind kind) {
  std::set<std::string> known;
  for (const auto& [k, d] : train_config_keys()) known.insert(k);
  kv.reject_unknown(known);

  TrainConfig c;
  const auto task = kv.text("task", "pma");
  if (task == "pma")
    c.task = Task::pma;
  else if (task == "ga")
    c.task = Task::ga;
  else
    throw ConfigError("task must be pma or ga, got '" + task + "'");

  auto m = model::SiTConfig::named(kv.text("variant", "tiny"));
  const auto base = m;
  m.layers = kv.integer("layers", m.layers);
  m.heads = kv.integer("heads", m.heads);
  m.hidden = kv.integer("hidden", m.hidden);
  m.mlp = kv.integer("mlp", kv.has("hidden") ? 4 * m.hidden : m.mlp);
  m.dropout = kv.real("dropout", 0.0);
  if (m.layers != base.layers || m.heads != base.heads || m.hidden != base.hidden || m.mlp != base.mlp)
    m.variant = "custom";
  m.mpp_head = kind == RunKind::pretrain || kv.flag("keep_mpp_head", false);
  c.deconfound = kv.flag("deconfound", false);
  m.confound_tokens = c.deconfound ? 1 : 0;
  c.model = m;

  const bool ga = c.task == Task::ga;
  const bool fine = kind == RunKind::fine_tune;
  auto& o = c.optimizer;
  o.kind = parse_optimizer(kv.text("optimizer", ga ? "adam" : "sgd"));
  o.lr = kv.real("lr", ga ? (fine ? 3e-4 : 5e-4) : (fine ? 1e-5 : 1e-4));
  o.epochs = kv.integer("epochs", fine ? 1000 : 2000);
  o.warmup_epochs = kv.integer("warmup_epochs", fine ? 0 : std::min<std::size_t>(50, o.epochs));
  o.scheduler = parse_scheduler(kv.text("scheduler", "none"));
  const std::size_t batch = base.hidden >= 768 ? 64 : (base.hidden >= 384 ? 128 : 256);
  o.batch_size = kv.integer("batch_size", batch);

  c.corruption.mask_prob = kv.real("mask_prob", 0.5);
  c.label = kv.text("label", ga ? "birth_age" : "scan_age");
  c.seed = kv.integer("seed", 0);
  c.freeze_backbone = kv.flag("freeze_backbone", false);
  c.keep_mpp_head = kv.flag("keep_mpp_head", false);
  c.threads = kv.integer("threads", 0);
  c.time_budget_minutes = kv.real("time_budget_minutes", 0.0);
  c.manifest = kv.text("manifest", "");
  c.output_dir = kv.text("output_dir", "");
  c.mesh_order = static_cast<int>(kv.integer("mesh_order", 6));
  c.patch_order = static_cast<int>(kv.integer("patch_order", 2));
  c.validate();
  if (kind == RunKind::pretrain && !(c.corruption.mask_prob > 0))
    throw ConfigError("pretraining needs mask_prob > 0");
  return c;
}

KeyValues resolved_keys(const TrainConfig& c) {
  KeyValues kv;
  kv.set("task", c.task == Task::pma ? "pma" : "ga");
  kv.set("variant", c.model.variant);
  kv.set("layers", std::to_string(c.model.layers));
  kv.set("heads", std::to_string(c.model.heads));
  kv.set("hidden", std::to_string(c.model.hidden));
  kv.set("mlp", std::to_string(c.model.mlp));
  kv.set("dropout", fmt(c.model.dropout));
  kv.set("optimizer", to_string(c.optimizer.kind));
  kv.set("lr", fmt(c.optimizer.lr));
  kv.set("warmup_epochs", std::to_string(c.optimizer.warmup_epochs));
  kv.set("scheduler", to_string(c.optimizer.scheduler));
  kv.set("batch_size", std::to_string(c.optimizer.batch_size));
  kv.set("epochs", std::to_string(c.optimizer.epochs));
  kv.set("seed", std::to_string(c.seed));
  kv.set("mask_prob", fmt(c.corruption.mask_prob));
  kv.set("deconfound", c.deconfound ? "1" : "0");
  kv.set("freeze_backbone", c.freeze_backbone ? "1" : "0");
  kv.set("keep_mpp_head", c.keep_mpp_head ? "1" : "0");
  kv.set("label", c.label);
  kv.set("manifest", c.manifest.string());
  kv.set("output_dir", c.output_dir.string());
  kv.set("threads", std::to_string(c.threads));
  kv.set("time_budget_minutes", fmt(c.time_budget_minutes));
  kv.set("mesh_order", std::to_string(c.mesh_order));
  kv.set("patch_order", std::to_string(c.patch_order));
  return kv;
}

SiTModel<float> make_model(const TrainConfig& config, RunKind kind, const ad::Checkpoint* from) {
  auto arch = config.model;
  if (from) {
    arch = model::config_from_checkpoint(*from);
    arch.mpp_head = kind == RunKind::pretrain || config.keep_mpp_head;
    arch.confound_tokens = config.deconfound ? 1 : 0;
  }
  SiTModel<float> m(arch);
  ad::Rng rng(derive_seed(config.seed, {kInit}));
  m.init(rng);
  if (from) m.load(*from, true);
  return m;
}

double label_of(const data::Example& ex, const std::string& label) {
  if (label == "scan_age") return ex.scan_age;
  if (label == "birth_age") return ex.birth_age;
  throw ConfigError("unknown label '" + label + "'");
}

SubjectScore score_subjects(const data::Dataset& data, std::span<const std::size_t> indices,
                            std::span<const double> predictions, const std::string& label) {
  if (indices.size() != predictions.size()) throw ShapeError("one prediction per example expected");
  SubjectScore s;
  std::map<std::string, std::size_t> slot;
  std::vector<std::size_t> counts;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& ex = data.examples[indices[k]];
    auto [it, fresh] = slot.emplace(ex.subject, s.subjects.size());
    if (fresh) {
      s.subjects.push_back(ex.subject);
      s.predictions.push_back(0);
      s.targets.push_back(label_of(ex, label));
      counts.push_back(0);
    }
    s.predictions[it->second] += predictions[k];
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < counts.size(); ++i) s.predictions[i] /= static_cast<double>(counts[i]);
  s.mae = mae(s.predictions, s.targets);
  return s;
}

void append_metrics(const std::filesystem::path& csv, const EpochMetrics& m) {
  const bool fresh = !std::filesystem::exists(csv);
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::app);
  if (!out) throw IoError("cannot append to " + csv.string());
  if (fresh) out << "epoch,train_loss,val_mae,lr,wall_seconds\n";
  out << m.epoch << ',' << fmt(m.train_loss) << ',' << fmt(m.val_mae) << ',' << fmt(m.lr) << ','
      << fmt(m.wall_seconds) << '\n';
}

namespace {

struct Loop {
  const data::Dataset& data;
  SiTModel<float>& model;
  const TrainConfig& config;
  std::vector<std::size_t> train_idx, val_idx;
  std::size_t workers;
  std::vector<std::uint8_t> trainable;

  Loop(const data::Dataset& d, SiTModel<float>& m, const TrainConfig& c) : data(d), model(m), config(c) {
    keep_buffers_on_heap();
    train_idx = data.indices(data::Split::train);
    val_idx = data.indices(data::Split::val);
    if (train_idx.empty()) throw ConfigError("the training split is empty");
    if (val_idx.empty()) throw ConfigError("the validation split is empty");
    workers = resolve_threads(c.threads);
    if (c.freeze_backbone) trainable = m.head_only_mask();
    const auto& mc = m.config();
    for (const auto& ex : data.examples)
      if (ex.tokens.rows() != mc.seq_len || ex.tokens.cols() != mc.patch_dim)
        throw DataError("example " + ex.subject + "/" + ex.hemi + " has tokens " + ex.tokens.shape().str() +
                        ", model expects [" + std::to_string(mc.seq_len) + "x" + std::to_string(mc.patch_dim) +
                        "]");
  }

  // Runs `example_loss(pass, example, j)` for every example of the batch,
  // accumulating gradients per worker, reduces them in worker order and
  // returns the summed loss.
  template <typename F>
  double batch_gradients(std::span<const std::size_t> batch, ad::Gradients<float>& total,
                         std::vector<ad::Gradients<float>>& local, std::size_t epoch, F&& example_loss) {
    std::vector<double> loss(batch.size(), 0.0);
    for (auto& g : local)
      for (auto& a : g) a.fill(0.0f);
    parallel_for(batch.size(), workers, [&](std::size_t j, std::size_t w) {
      ad::Tape<float> tape;
      Pass<float> pass(tape, model.params(), &local[w], trainable);
      pass.training = true;
      ad::Rng rng(derive_seed(config.seed, {kExample, epoch, batch[j]}));
      pass.rng = &rng;
      auto l = example_loss(pass, batch[j], j, rng);
      loss[j] = static_cast<double>(l.value()[0]);
      tape.backward(l, 1.0f / static_cast<float>(batch.size()));
    });
    for (auto& a : total) a.fill(0.0f);
    for (auto& g : local) ad::accumulate(total, g);
    double sum = 0;
    for (double l : loss) sum += l;
    if (!std::isfinite(sum)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    return sum;
  }

  template <typename StepLoss, typename Validate, typename Snapshot>
  TrainResult run(StepLoss&& step_loss, Validate&& validate, Snapshot&& snapshot, const EpochCallback& on_epoch,
                  const std::function<void(std::span<const std::size_t>)>& before_batch = {}) {
    const auto& oc = config.optimizer;
    const std::size_t steps_per_epoch = (train_idx.size() + oc.batch_size - 1) / oc.batch_size;
    LrSchedule schedule(oc.lr, oc.warmup_epochs * steps_per_epoch, oc.epochs * steps_per_epoch, oc.scheduler);
    Optimizer<float> opt(oc, model.params());
    auto total = ad::zero_gradients(model.params());
    std::vector<ad::Gradients<float>> local(std::min(workers, oc.batch_size), ad::zero_gradients(model.params()));

    TrainResult result;
    Clock clock;
    std::size_t step = 0;
    auto order = train_idx;
    for (std::size_t epoch = 1; epoch <= oc.epochs; ++epoch) {
      ad::Rng shuffle(derive_seed(config.seed, {kShuffle, epoch}));
      std::shuffle(order.begin(), order.end(), shuffle);
      double loss_sum = 0;
      double lr = 0;
      for (std::size_t b = 0; b < order.size(); b += oc.batch_size) {
        const std::span<const std::size_t> batch(order.data() + b, std::min(oc.batch_size, order.size() - b));
        if (before_batch) before_batch(batch);
        loss_sum += batch_gradients(batch, total, local, epoch, step_loss);
        lr = schedule.at(step++);
        opt.step(model.params(), total, lr, trainable);
      }
      EpochMetrics m;
      m.epoch = epoch;
      m.train_loss = loss_sum / static_cast<double>(order.size());
      m.val_mae = validate();
      if (!std::isfinite(m.val_mae))
        throw NumericError("validation metric became non-finite at epoch " + std::to_string(epoch));
      m.lr = lr;
      m.wall_seconds = clock.seconds();
      result.log.push_back(m);
      if (m.val_mae < result.best_val_mae) {
        result.best_val_mae = m.val_mae;
        result.best_epoch = epoch;
        result.best = snapshot(epoch);
      }
      if (on_epoch) on_epoch(m);
      if (config.time_budget_minutes > 0 && epoch < oc.epochs) {
        const double per_epoch = m.wall_seconds / static_cast<double>(epoch);
        if (m.wall_seconds + per_epoch > 60.0 * config.time_budget_minutes) {
          result.budget_exhausted = true;
          break;
        }
      }
    }
    result.last = snapshot(result.log.back().epoch);
    return result;
  }
};

}  // namespace

TrainResult train(const data::Dataset& data, SiTModel<float>& model, const TrainConfig& config,
                  const EpochCallback& on_epoch, const ad::Checkpoint* from) {
  config.validate();
  if (config.deconfound && !model.index().confound_w)
    throw ConfigError("deconfounding requested but the model has no confound projection");
  Loop loop(data, model, config);

  // targets are standardised with training-split statistics
  double mu = 0, sd = 0;
  for (auto i : loop.train_idx) mu += label_of(data.examples[i], config.label);
  mu /= static_cast<double>(loop.train_idx.size());
  for (auto i : loop.train_idx) {
    const double d = label_of(data.examples[i], config.label) - mu;
    sd += d * d;
  }
  sd = std::sqrt(sd / static_cast<double>(loop.train_idx.size()));
  if (!(sd > 1e-12)) sd = 1.0;

  ConfoundEncoder confound;
  if (config.deconfound && from && from->record("confound_mean")) confound.load(*from);
  std::vector<double> batch_z;  // normalised confounds of the current batch, by position

  auto step_loss = [&](Pass<float>& pass, std::size_t idx, std::size_t j, ad::Rng&) {
    const auto& ex = data.examples[idx];
    std::vector<ad::Var<float>> extras;
    if (config.deconfound) extras.push_back(confound.encode(pass, model, batch_z[j]));
    auto pred = model.forward_regress(pass, ex.tokens, extras);
    const ad::Array<float> target(1, 1, static_cast<float>((label_of(ex, config.label) - mu) / sd));
    return ad::mse(pred, target);
  };
  auto before_batch = [&](std::span<const std::size_t> batch) {
    if (!config.deconfound) return;
    std::vector<double> ages;
    for (auto i : batch) ages.push_back(data.examples[i].scan_age);
    batch_z = confound.normalize(ages, true);
  };

  auto predict_all = [&](std::span<const std::size_t> idx) {
    std::vector<double> preds(idx.size());
    parallel_for(idx.size(), loop.workers, [&](std::size_t k, std::size_t) {
      const auto& ex = data.examples[idx[k]];
      ad::Tape<float> tape(false);
      Pass<float> pass(tape, model.params());
      std::vector<ad::Var<float>> extras;
      if (config.deconfound) {
        auto z = const_cast<ConfoundEncoder&>(confound).normalize(std::span(&ex.scan_age, 1), false);
        extras.push_back(confound.encode(pass, model, z[0]));
      }
      preds[k] = mu + sd * static_cast<double>(model.forward_regress(pass, ex.tokens, extras).value()[0]);
    });
    return preds;
  };
  auto validate = [&] { return score_subjects(data, loop.val_idx, predict_all(loop.val_idx), config.label).mae; };
  auto snapshot = [&](std::size_t epoch) {
    auto ckpt = model.to_checkpoint();
    ckpt.set_record("kind", "regression");
    ckpt.set_record("task", config.task == Task::pma ? "pma" : "ga");
    ckpt.set_record("label", config.label);
    ckpt.set_record("label_mean", fmt(mu));
    ckpt.set_record("label_std", fmt(sd));
    ckpt.set_record("deconfound", config.deconfound ? "1" : "0");
    ckpt.set_record("epoch", std::to_string(epoch));
    if (config.deconfound) confound.save(ckpt);
    return ckpt;
  };

  auto result = loop.run(step_loss, validate, snapshot, on_epoch, before_batch);
  const std::vector<double> mean_pred(loop.val_idx.size(), mu);
  result.baseline_mae = score_subjects(data, loop.val_idx, mean_pred, config.label).mae;
  return result;
}

TrainResult pretrain_mpp(const data::Dataset& data, SiTModel<float>& model, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  if (!model.index().mask_token) throw ConfigError("pretraining needs a model with an MPP head");
  if (!(config.corruption.mask_prob > 0)) throw ConfigError("pretraining needs mask_prob > 0");
  Loop loop(data, model, config);
  const auto n = model.config().seq_len;

  auto reconstruct = [&](Pass<float>& pass, const data::Example& ex, const CorruptionPlan& plan) {
    auto emb = model.embed_patches(pass, ex.tokens);
    auto corrupted = corrupt_sequence(emb, pass.param(*model.index().mask_token), plan);
    return model.forward_mpp(pass, model.assemble(pass, corrupted));
  };
  auto step_loss = [&](Pass<float>& pass, std::size_t idx, std::size_t, ad::Rng& rng) {
    const auto& ex = data.examples[idx];
    CorruptionPlan plan;
    do {
      plan = plan_corruption(n, config.corruption, rng);
    } while (plan.corrupted() == 0);
    return mpp_loss(reconstruct(pass, ex, plan), ex.tokens, plan.mask);
  };
  auto validate = [&] {
    std::vector<double> err(loop.val_idx.size()), cnt(loop.val_idx.size());
    parallel_for(loop.val_idx.size(), loop.workers, [&](std::size_t k, std::size_t) {
      const auto& ex = data.examples[loop.val_idx[k]];
      ad::Rng rng(derive_seed(config.seed, {kValCorrupt, loop.val_idx[k]}));
      CorruptionPlan plan;
      do {
        plan = plan_corruption(n, config.corruption, rng);
      } while (plan.corrupted() == 0);
      ad::Tape<float> tape(false);
      Pass<float> pass(tape, model.params());
      const auto& rec = reconstruct(pass, ex, plan).value();
      for (std::size_t r = 0; r < n; ++r) {
        if (!plan.mask[r]) continue;
        for (std::size_t c = 0; c < rec.cols(); ++c) err[k] += std::abs(double(rec(r, c)) - double(ex.tokens(r, c)));
        cnt[k] += static_cast<double>(rec.cols());
      }
    });
    return std::accumulate(err.begin(), err.end(), 0.0) / std::accumulate(cnt.begin(), cnt.end(), 0.0);
  };
  auto snapshot = [&](std::size_t epoch) {
    auto ckpt = model.to_checkpoint();
    ckpt.set_record("kind", "mpp");
    ckpt.set_record("epoch", std::to_string(epoch));
    return ckpt;
  };
  return loop.run(step_loss, validate, snapshot, on_epoch);
}

Predictor::Predictor(const ad::Checkpoint& ckpt) : model_(model::config_from_checkpoint(ckpt)) {
  model_.load(ckpt);
  if (ckpt.record("kind") != "regression") throw DataError("checkpoint is not a regression checkpoint");
  label_ = ckpt.record("label").value_or("scan_age");
  label_mean_ = parse_record(ckpt, "label_mean");
  label_std_ = parse_record(ckpt, "label_std");
  deconfound_ = ckpt.record("deconfound") == "1";
  if (deconfound_) confound_.load(ckpt);
}

double Predictor::predict(const data::Example& ex, model::AttentionRecord* record) const {
  ad::Tape<float> tape(false);
  Pass<float> pass(tape, model_.params());
  pass.record = record;
  std::vector<ad::Var<float>> extras;
  if (deconfound_) {
    ConfoundEncoder eval = confound_;
    const auto z = eval.normalize(std::span(&ex.scan_age, 1), false);
    extras.push_back(confound_.encode(pass, model_, z[0]));
  }
  return label_mean_ + label_std_ * static_cast<double>(model_.forward_regress(pass, ex.tokens, extras).value()[0]);
}

}  // namespace sit::training
