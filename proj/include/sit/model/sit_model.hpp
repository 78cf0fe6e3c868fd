#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sit/autodiff/checkpoint.hpp"
#include "sit/autodiff/ops.hpp"
#include "sit/autodiff/parameters.hpp"
#include "sit/geometry/signal.hpp"
#include "sit/model/config.hpp"

namespace sit::model {

using ad::Array;
using ad::Tape;
using ad::Var;

// Attention weights captured during one forward pass, [layer][head] of
// S x S matrices. Sequence layout: row 0 is the regression token, rows
// 1..patch_count the patches, then extra_tokens position-less covariates.
struct AttentionRecord {
  std::size_t patch_count = 0;
  std::size_t extra_tokens = 0;
  std::size_t expected_layers = 0;  // set by the model; 0 = unknown
  std::vector<std::vector<Array<double>>> layers;  // [layer][head], S x S

  std::size_t sequence_length() const { return patch_count + 1 + extra_tokens; }
};

// Per-pass state: which tape to record on, where parameter gradients go,
// and whether dropout / attention capture are active. Parameters are
// borrowed onto the tape lazily, once each.
template <typename T>
class Pass {
 public:
  Pass(Tape<T>& tape, const ad::ParameterSet<T>& params, ad::Gradients<T>* grads = nullptr,
       std::span<const std::uint8_t> trainable = {})
      : tape_(tape), params_(params), grads_(grads), trainable_(trainable), cache_(params.size()) {}

  Tape<T>& tape() { return tape_; }
  Var<T> param(std::size_t index);

  bool training = false;
  ad::Rng* rng = nullptr;             // required when training with dropout
  AttentionRecord* record = nullptr;  // filled when set

 private:
  Tape<T>& tape_;
  const ad::ParameterSet<T>& params_;
  ad::Gradients<T>* grads_;
  std::span<const std::uint8_t> trainable_;
  std::vector<std::optional<Var<T>>> cache_;
};

template <typename T>
struct HeadAttention {
  Var<T> output;   // S x D_h
  Var<T> weights;  // S x S, rows sum to 1
};

// Softmax(q k^T / sqrt(d_h)) v for one head.
template <typename T>
HeadAttention<T> scaled_dot_product(Var<T> q, Var<T> k, Var<T> v);

// Single-head self-attention of x with bias-free projections.
template <typename T>
HeadAttention<T> self_attention(Var<T> x, Var<T> wq, Var<T> wk, Var<T> wv);

// Index of every tensor of one transformer block inside the ParameterSet.
struct BlockIndex {
  std::size_t norm1_w, norm1_b;
  std::size_t q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  std::size_t norm2_w, norm2_b;
  std::size_t fc1_w, fc1_b, fc2_w, fc2_b;
};

struct ModelIndex {
  std::size_t patch_w, patch_b, reg_token, pos_embed;
  std::vector<BlockIndex> blocks;
  std::size_t norm_w, norm_b;
  std::size_t head_norm_w, head_norm_b, head_fc1_w, head_fc1_b, head_fc2_w, head_fc2_b;
  std::optional<std::size_t> mask_token, mpp_w, mpp_b;
  std::optional<std::size_t> confound_w, confound_b;
};

// Surface vision transformer encoder with regression and masked patch
// prediction heads. Pre-norm blocks:
//   Z  = MSA(LN(X)) + X
//   X' = FFN(LN(Z)) + Z
template <typename T>
class SiTModel {
 public:
  // All weights zero, layernorm scales one. Call init() for training.
  explicit SiTModel(SiTConfig config);

  const SiTConfig& config() const { return config_; }
  const ModelIndex& index() const { return index_; }
  ad::ParameterSet<T>& params() { return params_; }
  const ad::ParameterSet<T>& params() const { return params_; }

  // Truncated normal (std 0.02, cut at 2 std) for projections, tokens and
  // positional embeddings; zero biases; identity layernorms.
  void init(ad::Rng& rng);

  // Patch tokens [N x patch_dim] -> projected embeddings [N x D].
  Var<T> embed_patches(Pass<T>& pass, const Array<T>& tokens) const;
  // Prepends the regression token, adds positional embeddings to rows
  // 0..N and appends the extra tokens (each 1 x D) without position.
  Var<T> assemble(Pass<T>& pass, Var<T> patch_embeddings, std::span<const Var<T>> extras = {}) const;
  Var<T> embed_sequence(Pass<T>& pass, const Array<T>& tokens, std::span<const Var<T>> extras = {}) const;

  Var<T> msa(Pass<T>& pass, std::size_t layer, Var<T> x) const;
  Var<T> block(Pass<T>& pass, std::size_t layer, Var<T> x) const;
  // All blocks followed by the final layernorm.
  Var<T> encode(Pass<T>& pass, Var<T> sequence) const;

  // LN -> Linear(D, D/2) -> GELU -> Linear(D/2, 1) on row 0. Returns 1 x 1.
  Var<T> regression_head(Pass<T>& pass, Var<T> encoded) const;
  // Linear(D, patch_dim) on rows 1..N. Requires config().mpp_head.
  Var<T> mpp_head(Pass<T>& pass, Var<T> encoded) const;

  Var<T> forward_regress(Pass<T>& pass, const Array<T>& tokens, std::span<const Var<T>> extras = {}) const;
  // `sequence` is an assembled (already corrupted) S x D input.
  Var<T> forward_mpp(Pass<T>& pass, Var<T> sequence) const;

  // Eval-mode scalar prediction on a throwaway, non-recording tape.
  double predict(const Array<T>& tokens, std::span<const Array<T>> extras = {}) const;

  // Parameters whose name does not start with "head." are frozen.
  std::vector<std::uint8_t> head_only_mask() const;

  ad::Checkpoint to_checkpoint() const;
  // Copies every tensor present in `ckpt` by name (shape must match).
  // Tensors of this model missing from the checkpoint are left as they are
  // when allow_missing, otherwise DataError. Extra checkpoint tensors are
  // ignored. Returns the number of tensors loaded.
  std::size_t load(const ad::Checkpoint& ckpt, bool allow_missing = false);

 private:
  SiTConfig config_;
  ad::ParameterSet<T> params_;
  ModelIndex index_;
};

SiTConfig config_from_checkpoint(const ad::Checkpoint& ckpt);
void write_config_records(const SiTConfig& config, ad::Checkpoint& ckpt);

// PatchSequence -> [N x token_length] array.
template <typename T>
Array<T> token_matrix(const geometry::PatchSequence& seq);

}  // namespace sit::model
