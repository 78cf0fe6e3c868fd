#include "sit/model/sit_model.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "sit/errors.hpp"

namespace sit::model {

template <typename T>
Var<T> Pass<T>::param(std::size_t index) {
  if (index >= cache_.size()) throw BoundsError("parameter index out of range");
  if (!cache_[index]) {
    Array<T>* sink = nullptr;
    const bool trainable = trainable_.empty() || trainable_[index] != 0;
    if (grads_ && trainable) sink = &(*grads_)[index];
    cache_[index] = tape_.borrow(params_[index].value, sink);
  }
  return *cache_[index];
}

template <typename T>
HeadAttention<T> scaled_dot_product(Var<T> q, Var<T> k, Var<T> v) {
  const auto dh = static_cast<double>(q.shape().cols);
  auto logits = ad::scale(ad::matmul(q, k, ad::Transpose::second), static_cast<T>(1.0 / std::sqrt(dh)));
  auto weights = ad::softmax_rows(logits);
  return {ad::matmul(weights, v), weights};
}

template <typename T>
HeadAttention<T> self_attention(Var<T> x, Var<T> wq, Var<T> wk, Var<T> wv) {
  return scaled_dot_product(ad::matmul(x, wq), ad::matmul(x, wk), ad::matmul(x, wv));
}

template <typename T>
SiTModel<T>::SiTModel(SiTConfig config) : config_(std::move(config)) {
  for (const auto& [name, shape] : parameter_layout(config_)) {
    const auto i = params_.add(name, shape);
    if (name.ends_with("norm.weight") || name.ends_with("norm1.weight") || name.ends_with("norm2.weight"))
      params_[i].value.fill(T{1});
  }
  auto at = [&](const std::string& name) { return params_.index(name); };
  index_.patch_w = at("patch_embed.weight");
  index_.patch_b = at("patch_embed.bias");
  index_.reg_token = at("reg_token");
  index_.pos_embed = at("pos_embed");
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    BlockIndex b{};
    b.norm1_w = at(p + "norm1.weight");
    b.norm1_b = at(p + "norm1.bias");
    b.q_w = at(p + "attn.q.weight");
    b.q_b = at(p + "attn.q.bias");
    b.k_w = at(p + "attn.k.weight");
    b.k_b = at(p + "attn.k.bias");
    b.v_w = at(p + "attn.v.weight");
    b.v_b = at(p + "attn.v.bias");
    b.o_w = at(p + "attn.o.weight");
    b.o_b = at(p + "attn.o.bias");
    b.norm2_w = at(p + "norm2.weight");
    b.norm2_b = at(p + "norm2.bias");
    b.fc1_w = at(p + "mlp.fc1.weight");
    b.fc1_b = at(p + "mlp.fc1.bias");
    b.fc2_w = at(p + "mlp.fc2.weight");
    b.fc2_b = at(p + "mlp.fc2.bias");
    index_.blocks.push_back(b);
  }
  index_.norm_w = at("norm.weight");
  index_.norm_b = at("norm.bias");
  index_.head_norm_w = at("head.norm.weight");
  index_.head_norm_b = at("head.norm.bias");
  index_.head_fc1_w = at("head.fc1.weight");
  index_.head_fc1_b = at("head.fc1.bias");
  index_.head_fc2_w = at("head.fc2.weight");
  index_.head_fc2_b = at("head.fc2.bias");
  index_.mask_token = params_.find("mask_token");
  index_.mpp_w = params_.find("mpp_head.weight");
  index_.mpp_b = params_.find("mpp_head.bias");
  index_.confound_w = params_.find("confound.weight");
  index_.confound_b = params_.find("confound.bias");
}

template <typename T>
void SiTModel<T>::init(ad::Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&] {
    for (;;) {
      const double z = normal(rng);
      if (std::abs(z) <= 2.0) return static_cast<T>(0.02 * z);
    }
  };
  for (auto& p : params_) {
    const auto& n = p.name;
    if (n.ends_with(".bias")) {
      p.value.fill(T{0});
    } else if (n.ends_with("norm.weight") || n.ends_with("norm1.weight") || n.ends_with("norm2.weight")) {
      p.value.fill(T{1});
    } else {
      for (auto& v : p.value.values()) v = truncated();
    }
  }
}

template <typename T>
Var<T> SiTModel<T>::embed_patches(Pass<T>& pass, const Array<T>& tokens) const {
  if (tokens.cols() != config_.patch_dim)
    throw ShapeError("patch tokens " + tokens.shape().str() + " do not match patch_dim " +
                     std::to_string(config_.patch_dim));
  if (tokens.rows() != config_.seq_len)
    throw ShapeError("patch tokens " + tokens.shape().str() + " do not match seq_len " +
                     std::to_string(config_.seq_len));
  auto x = pass.tape().constant(tokens);
  return ad::linear(x, pass.param(index_.patch_w), pass.param(index_.patch_b));
}

template <typename T>
Var<T> SiTModel<T>::assemble(Pass<T>& pass, Var<T> patch_embeddings, std::span<const Var<T>> extras) const {
  const Var<T> head_rows[] = {pass.param(index_.reg_token), patch_embeddings};
  auto seq = ad::add(ad::concat_rows<T>(head_rows), pass.param(index_.pos_embed));
  if (pass.record) {
    pass.record->patch_count = patch_embeddings.shape().rows;
    pass.record->extra_tokens = extras.size();
    pass.record->layers.clear();
    pass.record->expected_layers = config_.layers;
  }
  if (extras.empty()) return seq;
  std::vector<Var<T>> parts{seq};
  for (const auto& e : extras) {
    if (e.shape() != ad::Shape{1, config_.hidden})
      throw ShapeError("extra token " + e.shape().str() + " must be [1x" + std::to_string(config_.hidden) + "]");
    parts.push_back(e);
  }
  return ad::concat_rows<T>(parts);
}

template <typename T>
Var<T> SiTModel<T>::embed_sequence(Pass<T>& pass, const Array<T>& tokens, std::span<const Var<T>> extras) const {
  return assemble(pass, embed_patches(pass, tokens), extras);
}

template <typename T>
Var<T> SiTModel<T>::msa(Pass<T>& pass, std::size_t layer, Var<T> x) const {
  const auto& b = index_.blocks.at(layer);
  auto q = ad::linear(x, pass.param(b.q_w), pass.param(b.q_b));
  auto k = ad::linear(x, pass.param(b.k_w), pass.param(b.k_b));
  auto v = ad::linear(x, pass.param(b.v_w), pass.param(b.v_b));
  const std::size_t h = config_.heads;
  const std::size_t dh = config_.head_dim();
  std::vector<Var<T>> heads;
  heads.reserve(h);
  std::vector<Array<double>> captured;
  for (std::size_t i = 0; i < h; ++i) {
    auto a = h == 1 ? scaled_dot_product(q, k, v)
                    : scaled_dot_product(ad::slice_cols(q, i * dh, dh), ad::slice_cols(k, i * dh, dh),
                                         ad::slice_cols(v, i * dh, dh));
    heads.push_back(a.output);
    if (pass.record) captured.push_back(a.weights.value().template cast<double>());
  }
  if (pass.record) {
    auto& layers = pass.record->layers;
    if (layers.size() <= layer) layers.resize(layer + 1);
    layers[layer] = std::move(captured);
  }
  auto merged = h == 1 ? heads.front() : ad::concat_cols<T>(heads);
  return ad::linear(merged, pass.param(b.o_w), pass.param(b.o_b));
}

template <typename T>
Var<T> SiTModel<T>::block(Pass<T>& pass, std::size_t layer, Var<T> x) const {
  const auto& b = index_.blocks.at(layer);
  static thread_local ad::Rng unused_rng;
  const bool drop = pass.training && config_.dropout > 0.0;
  if (drop && !pass.rng) throw StateError("training pass with dropout needs an rng");
  ad::Rng& rng = pass.rng ? *pass.rng : unused_rng;

  auto z = ad::add(msa(pass, layer, ad::layernorm_rows(x, pass.param(b.norm1_w), pass.param(b.norm1_b))), x);
  auto hdn = ad::gelu(ad::linear(ad::layernorm_rows(z, pass.param(b.norm2_w), pass.param(b.norm2_b)),
                                 pass.param(b.fc1_w), pass.param(b.fc1_b)));
  hdn = ad::dropout(hdn, config_.dropout, drop, rng);
  auto out = ad::dropout(ad::linear(hdn, pass.param(b.fc2_w), pass.param(b.fc2_b)), config_.dropout, drop, rng);
  return ad::add(out, z);
}

template <typename T>
Var<T> SiTModel<T>::encode(Pass<T>& pass, Var<T> sequence) const {
  if (sequence.shape().cols != config_.hidden)
    throw ShapeError("sequence " + sequence.shape().str() + " does not match hidden size " +
                     std::to_string(config_.hidden));
  auto x = sequence;
  for (std::size_t l = 0; l < config_.layers; ++l) x = block(pass, l, x);
  return ad::layernorm_rows(x, pass.param(index_.norm_w), pass.param(index_.norm_b));
}

template <typename T>
Var<T> SiTModel<T>::regression_head(Pass<T>& pass, Var<T> encoded) const {
  auto t = ad::layernorm_rows(ad::slice_rows(encoded, 0, 1), pass.param(index_.head_norm_w),
                              pass.param(index_.head_norm_b));
  t = ad::gelu(ad::linear(t, pass.param(index_.head_fc1_w), pass.param(index_.head_fc1_b)));
  return ad::linear(t, pass.param(index_.head_fc2_w), pass.param(index_.head_fc2_b));
}

template <typename T>
Var<T> SiTModel<T>::mpp_head(Pass<T>& pass, Var<T> encoded) const {
  if (!index_.mpp_w) throw ConfigError("model was built without an MPP head");
  auto patches = ad::slice_rows(encoded, 1, config_.seq_len);
  return ad::linear(patches, pass.param(*index_.mpp_w), pass.param(*index_.mpp_b));
}

template <typename T>
Var<T> SiTModel<T>::forward_regress(Pass<T>& pass, const Array<T>& tokens, std::span<const Var<T>> extras) const {
  return regression_head(pass, encode(pass, embed_sequence(pass, tokens, extras)));
}

template <typename T>
Var<T> SiTModel<T>::forward_mpp(Pass<T>& pass, Var<T> sequence) const {
  return mpp_head(pass, encode(pass, sequence));
}

template <typename T>
double SiTModel<T>::predict(const Array<T>& tokens, std::span<const Array<T>> extras) const {
  Tape<T> tape(false);
  Pass<T> pass(tape, params_);
  std::vector<Var<T>> ex;
  for (const auto& e : extras) ex.push_back(tape.constant(e));
  return static_cast<double>(forward_regress(pass, tokens, ex).value()[0]);
}

template <typename T>
std::vector<std::uint8_t> SiTModel<T>::head_only_mask() const {
  std::vector<std::uint8_t> mask(params_.size(), 0);
  for (std::size_t i = 0; i < params_.size(); ++i) mask[i] = params_[i].name.starts_with("head.") ? 1 : 0;
  return mask;
}

template <typename T>
ad::Checkpoint SiTModel<T>::to_checkpoint() const {
  ad::Checkpoint ckpt;
  write_config_records(config_, ckpt);
  for (const auto& p : params_) ckpt.tensors.push_back({p.name, p.value.template cast<float>()});
  return ckpt;
}

template <typename T>
std::size_t SiTModel<T>::load(const ad::Checkpoint& ckpt, bool allow_missing) {
  std::size_t loaded = 0;
  for (auto& p : params_) {
    const auto* t = ckpt.tensor(p.name);
    if (!t) {
      if (allow_missing) continue;
      throw DataError("checkpoint has no tensor '" + p.name + "'");
    }
    if (t->value.shape() != p.value.shape())
      throw ShapeError("checkpoint tensor '" + p.name + "' is " + t->value.shape().str() + ", model expects " +
                       p.value.shape().str());
    p.value = t->value.template cast<T>();
    ++loaded;
  }
  return loaded;
}

void write_config_records(const SiTConfig& c, ad::Checkpoint& ckpt) {
  ckpt.set_record("variant", c.variant);
  ckpt.set_record("layers", std::to_string(c.layers));
  ckpt.set_record("heads", std::to_string(c.heads));
  ckpt.set_record("hidden", std::to_string(c.hidden));
  ckpt.set_record("mlp", std::to_string(c.mlp));
  ckpt.set_record("patch_dim", std::to_string(c.patch_dim));
  ckpt.set_record("seq_len", std::to_string(c.seq_len));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", c.dropout);
  ckpt.set_record("dropout", buf);
  ckpt.set_record("mpp_head", c.mpp_head ? "1" : "0");
  ckpt.set_record("confound_tokens", std::to_string(c.confound_tokens));
}

SiTConfig config_from_checkpoint(const ad::Checkpoint& ckpt) {
  auto need = [&](const char* key) {
    auto v = ckpt.record(key);
    if (!v) throw DataError(std::string("checkpoint lacks the '") + key + "' record");
    return *v;
  };
  auto size = [&](const char* key) -> std::size_t {
    const auto v = need(key);
    try {
      std::size_t used = 0;
      const auto n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw DataError(std::string("checkpoint record '") + key + "' is not an integer: " + v);
    }
  };
  SiTConfig c;
  c.variant = need("variant");
  c.layers = size("layers");
  c.heads = size("heads");
  c.hidden = size("hidden");
  c.mlp = size("mlp");
  c.patch_dim = size("patch_dim");
  c.seq_len = size("seq_len");
  try {
    c.dropout = std::stod(need("dropout"));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint record 'dropout' is not a number");
  }
  c.mpp_head = need("mpp_head") == "1";
  c.confound_tokens = size("confound_tokens");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint describes an invalid model: ") + e.what());
  }
  return c;
}

template <typename T>
Array<T> token_matrix(const geometry::PatchSequence& seq) {
  const auto len = seq.token_length();
  if (seq.tokens.size() != seq.patch_count * len)
    throw ShapeError("patch sequence holds " + std::to_string(seq.tokens.size()) + " values, expected " +
                     std::to_string(seq.patch_count * len));
  Array<T> out(seq.patch_count, len);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) out[i] = static_cast<T>(seq.tokens[i]);
  return out;
}

#define SIT_INSTANTIATE(T)                                                 \
  template class Pass<T>;                                                  \
  template class SiTModel<T>;                                              \
  template HeadAttention<T> scaled_dot_product(Var<T>, Var<T>, Var<T>);    \
  template HeadAttention<T> self_attention(Var<T>, Var<T>, Var<T>, Var<T>); \
  template Array<T> token_matrix<T>(const geometry::PatchSequence&);

SIT_INSTANTIATE(float)
SIT_INSTANTIATE(double)

}  // namespace sit::model
