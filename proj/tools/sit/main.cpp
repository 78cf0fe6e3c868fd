#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "sit/errors.hpp"

namespace {

using namespace sit::cli;

void add_common(CLI::App* app, Common& common) {
  app->add_option("--seed", common.seed, "Master seed; overrides the config's seed");
  app->add_option("--threads", common.threads, "Worker threads (default: all cores; 1 is bitwise reproducible)")
      ->check(CLI::PositiveNumber);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const sit::ConfigError*>(&e) || dynamic_cast<const sit::BoundsError*>(&e)) return 2;
  if (dynamic_cast<const sit::DataError*>(&e) || dynamic_cast<const sit::ShapeError*>(&e)) return 3;
  if (dynamic_cast<const sit::NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface vision transformer toolkit: icosphere patching, training, attention maps"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.");
  std::function<int()> action;

  int order = 6;
  std::filesystem::path out;
  auto* ico = app.add_subcommand("icosphere", "Write an icosphere mesh (SMESH)");
  Common ico_common;
  add_common(ico, ico_common);
  ico->add_option("--order", order, "Subdivision order (0-8)")->required();
  ico->add_option("-o,--output", out, "Output .smesh")->required();
  ico->callback([&] { action = [&] { return icosphere(order, out); }; });

  int high = 6, low = 2;
  auto* tab = app.add_subcommand("patch-table", "Write the patch table of a high-order icosphere");
  Common tab_common;
  add_common(tab, tab_common);
  tab->add_option("--high", high, "Order of the data mesh")->capture_default_str();
  tab->add_option("--low", low, "Order whose faces define the patches")->capture_default_str();
  tab->add_option("-o,--output", out, "Output table")->required();
  tab->callback([&] { action = [&] { return patch_table(high, low, out); }; });

  std::filesystem::path in, src, dst;
  auto* res = app.add_subcommand("resample", "Barycentric resampling of a signal between sphere meshes");
  Common res_common;
  add_common(res, res_common);
  res->add_option("--in", in, "Input .ssig")->required()->check(CLI::ExistingFile);
  res->add_option("--src", src, "Mesh the signal lives on")->required()->check(CLI::ExistingFile);
  res->add_option("--dst", dst, "Target mesh")->required()->check(CLI::ExistingFile);
  res->add_option("-o,--output", out, "Output .ssig")->required();
  res->callback([&] { action = [&] { return resample(in, src, dst, out); }; });

  std::filesystem::path spec;
  std::vector<std::string> overrides;
  Common synth_common;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic cohort with a manifest");
  add_common(syn, synth_common);
  syn->add_option("--spec", spec, "Generator config (key = value); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  syn->add_option("--set", overrides, "Override a key: --set key=value (repeatable)");
  syn->add_option("-o,--output", out, "Output directory")->required();
  syn->footer(synth_keys_help());
  syn->callback([&] { action = [&] { return synth(spec, overrides, synth_common, out); }; });

  RunOptions pre_opts;
  auto* pre = app.add_subcommand("pretrain", "Masked patch prediction pretraining");
  add_common(pre, pre_opts.common);
  pre->add_option("--config", pre_opts.config, "Run config (key = value)")->required()->check(CLI::ExistingFile);
  pre->add_option("--set", pre_opts.overrides, "Override a key: --set key=value (repeatable)");
  pre->footer(train_keys_help() + "Writes resolved.cfg, metrics.csv, best.ckpt and last.ckpt to output_dir.");
  pre->callback([&] { action = [&] { return pretrain(pre_opts); }; });

  RunOptions train_opts;
  auto* trn = app.add_subcommand("train", "Phenotype regression, from scratch or fine-tuning a checkpoint");
  add_common(trn, train_opts.common);
  trn->add_option("--config", train_opts.config, "Run config (key = value)")->required()->check(CLI::ExistingFile);
  trn->add_option("--set", train_opts.overrides, "Override a key: --set key=value (repeatable)");
  trn->add_option("--from", train_opts.from, "Initialise from this checkpoint (fine-tuning defaults apply)")
      ->check(CLI::ExistingFile);
  trn->add_flag("--freeze-backbone", train_opts.freeze_backbone, "Train only the regression head");
  trn->footer(train_keys_help() + "Writes resolved.cfg, metrics.csv, best.ckpt and last.ckpt to output_dir.");
  trn->callback([&] { action = [&] { return train(train_opts); }; });

  std::filesystem::path ckpt, manifest;
  Common pred_common;
  auto* prd = app.add_subcommand("predict", "Predict every row of a manifest");
  add_common(prd, pred_common);
  prd->add_option("--ckpt", ckpt, "Regression checkpoint")->required()->check(CLI::ExistingFile);
  prd->add_option("--manifest", manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  prd->add_option("-o,--output", out, "Output CSV")->required();
  prd->callback([&] { action = [&] { return predict(ckpt, manifest, pred_common, out); }; });

  AttentionOptions att_opts;
  bool rollout = true;
  auto* att = app.add_subcommand("attention", "Per-head attention rollout mapped onto the sphere (SSIG)");
  add_common(att, att_opts.common);
  att->add_option("--ckpt", att_opts.checkpoint, "Regression checkpoint")->required()->check(CLI::ExistingFile);
  att->add_option("--manifest", att_opts.manifest, "Manifest CSV holding the example")
      ->required()
      ->check(CLI::ExistingFile);
  att->add_option("--example", att_opts.example, "Example id: <subject>_<hemi>, or <subject> for the left side");
  att->add_flag("--rollout", rollout, "Residual-aware rollout from the regression token (the only mode)");
  att->add_option("--threshold", att_opts.threshold, "Zero entries below this quantile, in [0, 1)");
  att->add_option("--average", att_opts.average, "Average the maps of every example in this split");
  att->add_option("-o,--output", att_opts.output, "Output .ssig (metadata goes to <output>.json)")->required();
  att->callback([&] { action = [&] { return attention(att_opts); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
