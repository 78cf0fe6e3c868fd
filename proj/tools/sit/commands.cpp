#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "sit/attention/maps.hpp"
#include "sit/data/dataset.hpp"
#include "sit/errors.hpp"
#include "sit/geometry/io.hpp"
#include "sit/geometry/resample.hpp"
#include "sit/training/trainer.hpp"

namespace sit::cli {

namespace fs = std::filesystem;
using training::RunKind;

namespace {

KeyValues load_config(const fs::path& path, const std::vector<std::string>& overrides, const Common& common) {
  auto kv = path.empty() ? KeyValues{} : KeyValues::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (common.seed) kv.set("seed", std::to_string(*common.seed));
  if (common.threads) kv.set("threads", std::to_string(*common.threads));
  return kv;
}

// Relative paths in a config file are relative to that file.
fs::path relative_to(const fs::path& config, const fs::path& p) {
  if (p.empty() || p.is_absolute() || config.empty()) return p;
  return config.parent_path() / p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int record_int(const ad::Checkpoint& ckpt, const char* key, int fallback) {
  const auto v = ckpt.record(key);
  if (!v) return fallback;
  try {
    return std::stoi(*v);
  } catch (const std::logic_error&) {
    throw DataError(std::string("checkpoint record '") + key + "' is not an integer");
  }
}

geometry::PatchTable table_for(const ad::Checkpoint& ckpt) {
  return geometry::build_patch_table(record_int(ckpt, "mesh_order", 6), record_int(ckpt, "patch_order", 2));
}

void stamp(ad::Checkpoint& ckpt, const training::TrainConfig& tc, const data::Dataset& ds) {
  ckpt.set_record("mesh_order", std::to_string(tc.mesh_order));
  ckpt.set_record("patch_order", std::to_string(tc.patch_order));
  data::save_normalization(ckpt, ds.normalization);
}

int run(const RunOptions& o, RunKind kind) {
  auto kv = load_config(o.config, o.overrides, o.common);
  if (o.freeze_backbone) kv.set("freeze_backbone", "1");
  auto tc = training::train_config_from(kv, kind);
  if (tc.manifest.empty()) throw ConfigError("config sets no manifest");
  if (tc.output_dir.empty()) throw ConfigError("config sets no output_dir");
  tc.manifest = relative_to(o.config, tc.manifest);
  tc.output_dir = relative_to(o.config, tc.output_dir);

  std::optional<ad::Checkpoint> from;
  if (!o.from.empty()) from = ad::read_checkpoint(o.from);

  const auto table = geometry::build_patch_table(tc.mesh_order, tc.patch_order);
  const auto manifest = data::read_manifest(tc.manifest);
  std::clog << "loading " << manifest.rows.size() << " hemispheres from " << tc.manifest << '\n';
  const auto ds = data::load_dataset(manifest, table, true);
  tc.model.seq_len = table.patch_count;
  tc.model.patch_dim = ds.examples.empty() ? 0 : ds.examples.front().tokens.cols();

  fs::create_directories(tc.output_dir);
  auto snapshot = training::resolved_keys(tc).dump();
  if (from) snapshot = "# initialised from " + o.from.string() + "\n" + snapshot;
  write_text(tc.output_dir / "resolved.cfg", snapshot);
  const auto csv = tc.output_dir / "metrics.csv";
  fs::remove(csv);

  auto model = training::make_model(tc, kind, from ? &*from : nullptr);
  std::clog << "model " << model.config().variant << ": " << model.params().scalar_count() << " parameters\n";
  const auto on_epoch = [&](const training::EpochMetrics& m) {
    training::append_metrics(csv, m);
    std::clog << "epoch " << m.epoch << "/" << tc.optimizer.epochs << "  loss " << fmt(m.train_loss, "%.5f")
              << "  val " << fmt(m.val_mae, "%.4f") << "  lr " << fmt(m.lr, "%.3g") << "  " << fmt(m.wall_seconds, "%.1f")
              << " s\n";
  };
  auto result = kind == RunKind::pretrain ? training::pretrain_mpp(ds, model, tc, on_epoch)
                                          : training::train(ds, model, tc, on_epoch, from ? &*from : nullptr);
  stamp(result.best, tc, ds);
  stamp(result.last, tc, ds);
  ad::write_checkpoint(tc.output_dir / "best.ckpt", result.best);
  ad::write_checkpoint(tc.output_dir / "last.ckpt", result.last);

  std::cout << "best validation " << (kind == RunKind::pretrain ? "reconstruction MAE " : "MAE ")
            << fmt(result.best_val_mae, "%.4f") << " at epoch " << result.best_epoch;
  if (kind != RunKind::pretrain) std::cout << " (predict-the-mean baseline " << fmt(result.baseline_mae, "%.4f") << ")";
  std::cout << '\n';
  if (result.budget_exhausted)
    std::cout << "time budget reached after " << result.log.size() << " of " << tc.optimizer.epochs << " epochs\n";
  std::cout << "wrote " << (tc.output_dir / "best.ckpt").string() << '\n';
  return 0;
}

std::string keys_help(const std::vector<std::pair<std::string, std::string>>& keys) {
  std::string out = "Config keys (key = value, '#' comments):\n";
  for (const auto& [k, d] : keys) {
    out += "  " + k;
    out += std::string(k.size() < 22 ? 22 - k.size() : 1, ' ');
    out += d + "\n";
  }
  return out;
}

}  // namespace

std::string train_keys_help() { return keys_help(training::train_config_keys()); }
std::string synth_keys_help() { return keys_help(data::synthetic_spec_keys()); }

int icosphere(int order, const fs::path& out) {
  const auto ico = geometry::build_icosphere(order);
  geometry::write_smesh(out, ico.mesh(), order);
  std::cout << "order " << order << ": " << ico.vertex_count() << " vertices, " << ico.face_count() << " faces, "
            << ico.edge_count() << " edges\n";
  return 0;
}

int patch_table(int high, int low, const fs::path& out) {
  const auto table = geometry::build_patch_table(high, low);
  geometry::write_patch_table(out, table);
  std::cout << table.patch_count << " patches x " << table.vertices_per_patch << " vertices over "
            << table.mesh_vertex_count << " mesh vertices\n";
  return 0;
}

int resample(const fs::path& in, const fs::path& src, const fs::path& dst, const fs::path& out) {
  const auto signal = geometry::read_ssig(in);
  const auto source = geometry::read_smesh(src);
  const auto target = geometry::read_smesh(dst);
  if (signal.vertex_count != source.mesh.vertices.size())
    throw DataError("signal has " + std::to_string(signal.vertex_count) + " vertices, source mesh " +
                    std::to_string(source.mesh.vertices.size()));
  geometry::SurfaceSignal result;
  if (source.order >= 0) {
    // icospheres get the hierarchical point location
    const geometry::Icosphere ico(source.order);
    if (ico.vertex_count() != source.mesh.vertices.size())
      throw DataError("source mesh claims order " + std::to_string(source.order) + " but has " +
                      std::to_string(source.mesh.vertices.size()) + " vertices");
    result = geometry::resample_barycentric(signal, ico, target.mesh.vertices);
  } else {
    result = geometry::resample_barycentric(signal, source.mesh, target.mesh.vertices);
  }
  geometry::write_ssig(out, result);
  std::cout << "resampled " << signal.vertex_count << " -> " << result.vertex_count << " vertices\n";
  return 0;
}

int synth(const fs::path& spec_path, const std::vector<std::string>& overrides, const Common& common,
          const fs::path& out) {
  const auto spec = data::synthetic_spec_from(load_config(spec_path, overrides, Common{common.seed, {}}));
  const auto manifest = data::generate_synthetic(spec, out);
  write_text(out / "synth.cfg", data::resolved_keys(spec).dump());
  std::cout << "wrote " << manifest.rows.size() << " hemispheres (" << manifest.count(data::Split::train) << " train, "
            << manifest.count(data::Split::val) << " val, " << manifest.count(data::Split::test) << " test) to "
            << (out / "manifest.csv").string() << '\n';
  return 0;
}

int pretrain(const RunOptions& options) { return run(options, RunKind::pretrain); }

int train(const RunOptions& options) { return run(options, options.from.empty() ? RunKind::scratch : RunKind::fine_tune); }

int predict(const fs::path& checkpoint, const fs::path& manifest_path, const Common& common, const fs::path& out) {
  const auto ckpt = ad::read_checkpoint(checkpoint);
  const training::Predictor predictor(ckpt);
  const auto table = table_for(ckpt);
  const auto norm = data::load_normalization(ckpt);
  const auto manifest = data::read_manifest(manifest_path);
  std::vector<double> preds(manifest.rows.size());
  training::parallel_for(manifest.rows.size(), common.threads.value_or(0), [&](std::size_t i, std::size_t) {
    preds[i] = predictor.predict(data::load_example(manifest.rows[i], table, &norm));
  });
  std::string csv = "subject,hemi,split,prediction," + predictor.label() + "\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& r = manifest.rows[i];
    const double target = predictor.label() == "birth_age" ? r.birth_age : r.scan_age;
    csv += r.subject + "," + r.hemi + "," + data::to_string(r.split) + "," + fmt(preds[i]) + "," + fmt(target) + "\n";
  }
  write_text(out, csv);
  std::cout << "wrote " << preds.size() << " predictions to " << out.string() << '\n';
  return 0;
}

int attention(const AttentionOptions& o) {
  const auto ckpt = ad::read_checkpoint(o.checkpoint);
  const training::Predictor predictor(ckpt);
  const auto table = table_for(ckpt);
  const auto norm = data::load_normalization(ckpt);
  const auto manifest = data::read_manifest(o.manifest);

  std::vector<const data::ManifestRow*> rows;
  if (o.average) {
    const auto split = data::parse_split(*o.average);
    for (const auto& r : manifest.rows)
      if (r.split == split) rows.push_back(&r);
  } else {
    if (o.example.empty()) throw ConfigError("give --example or --average");
    for (const auto& r : manifest.rows)
      if (r.subject + "_" + r.hemi == o.example || (r.subject == o.example && r.hemi == "L")) rows.push_back(&r);
  }
  if (rows.empty()) throw DataError("no manifest row matches the requested example or split");

  std::vector<attention::VertexAttentionMap> maps(rows.size());
  training::parallel_for(rows.size(), o.common.threads.value_or(0), [&](std::size_t i, std::size_t) {
    model::AttentionRecord record;
    predictor.predict(data::load_example(*rows[i], table, &norm), &record);
    maps[i] = attention::vertex_attention(record, table);
    maps[i].subject = rows[i]->subject + "_" + rows[i]->hemi;
  });
  auto map = attention::average_maps(maps);
  map.task = ckpt.record("task").value_or("");
  if (o.threshold) map = attention::threshold_heads(map, *o.threshold);
  map.validate();
  geometry::write_ssig(o.output, attention::to_signal(map));

  nlohmann::ordered_json meta;
  meta["subject"] = o.average ? "average:" + *o.average : map.subject;
  meta["examples"] = rows.size();
  meta["task"] = map.task;
  meta["heads"] = map.heads;
  meta["layers"] = {map.first_layer, map.last_layer};
  meta["rollout"] = "0.5*(A+I), row-normalised, per head";
  meta["threshold"] = o.threshold ? nlohmann::ordered_json(*o.threshold) : nlohmann::ordered_json(nullptr);
  write_text(fs::path(o.output.string() + ".json"), meta.dump(2) + "\n");
  std::cout << "wrote " << map.heads << " head maps over " << rows.size() << " example(s) to " << o.output.string()
            << '\n';
  return 0;
}

}  // namespace sit::cli
