#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sit::cli {

// Flags shared by every subcommand.
struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;  // unset: all cores
};

struct RunOptions {
  Common common;
  std::filesystem::path config;
  std::vector<std::string> overrides;  // key=value
  std::filesystem::path from;          // train only
  bool freeze_backbone = false;
};

struct AttentionOptions {
  Common common;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::string example;  // subject or subject_hemi
  std::optional<std::string> average;  // split name
  std::optional<double> threshold;
  std::filesystem::path output;
};

int icosphere(int order, const std::filesystem::path& out);
int patch_table(int high, int low, const std::filesystem::path& out);
int resample(const std::filesystem::path& in, const std::filesystem::path& src, const std::filesystem::path& dst,
             const std::filesystem::path& out);
int synth(const std::filesystem::path& spec, const std::vector<std::string>& overrides, const Common& common,
          const std::filesystem::path& out);
int pretrain(const RunOptions& options);
int train(const RunOptions& options);
int predict(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, const Common& common,
            const std::filesystem::path& out);
int attention(const AttentionOptions& options);

// Help footers listing every accepted config key.
std::string train_keys_help();
std::string synth_keys_help();

}  // namespace sit::cli
