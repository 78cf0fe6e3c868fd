#include "sit/model/config.hpp"

#include "sit/errors.hpp"

namespace sit::model {

void SiTConfig::validate() const {
  if (layers == 0 || heads == 0 || hidden == 0 || mlp == 0 || patch_dim == 0 || seq_len == 0)
    throw ConfigError("SiT dimensions must all be positive");
  if (hidden % heads != 0)
    throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (hidden < 2) throw ConfigError("hidden size must be at least 2 for the regression head");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (confound_tokens > 1) throw ConfigError("at most one confound token is supported");
}

namespace {
SiTConfig make(const char* name, std::size_t heads, std::size_t hidden) {
  SiTConfig c;
  c.variant = name;
  c.layers = 12;
  c.heads = heads;
  c.hidden = hidden;
  c.mlp = 4 * hidden;
  return c;
}
}  // namespace

SiTConfig SiTConfig::tiny() { return make("tiny", 3, 192); }
SiTConfig SiTConfig::small() { return make("small", 6, 384); }
SiTConfig SiTConfig::base() { return make("base", 12, 768); }

SiTConfig SiTConfig::named(const std::string& variant) {
  if (variant == "tiny") return tiny();
  if (variant == "small") return small();
  if (variant == "base") return base();
  throw ConfigError("unknown SiT variant '" + variant + "' (expected tiny, small or base)");
}

std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const SiTConfig& c) {
  c.validate();
  const std::size_t d = c.hidden;
  std::vector<std::pair<std::string, ad::Shape>> layout;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    layout.emplace_back(std::move(name), ad::Shape{rows, cols});
  };
  add("patch_embed.weight", c.patch_dim, d);
  add("patch_embed.bias", 1, d);
  add("reg_token", 1, d);
  add("pos_embed", c.seq_len + 1, d);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    add(p + "norm1.weight", 1, d);
    add(p + "norm1.bias", 1, d);
    for (const char* w : {"q", "k", "v", "o"}) {
      add(p + "attn." + w + ".weight", d, d);
      add(p + "attn." + w + ".bias", 1, d);
    }
    add(p + "norm2.weight", 1, d);
    add(p + "norm2.bias", 1, d);
    add(p + "mlp.fc1.weight", d, c.mlp);
    add(p + "mlp.fc1.bias", 1, c.mlp);
    add(p + "mlp.fc2.weight", c.mlp, d);
    add(p + "mlp.fc2.bias", 1, d);
  }
  add("norm.weight", 1, d);
  add("norm.bias", 1, d);
  add("head.norm.weight", 1, d);
  add("head.norm.bias", 1, d);
  add("head.fc1.weight", d, d / 2);
  add("head.fc1.bias", 1, d / 2);
  add("head.fc2.weight", d / 2, 1);
  add("head.fc2.bias", 1, 1);
  if (c.mpp_head) {
    add("mask_token", 1, d);
    add("mpp_head.weight", d, c.patch_dim);
    add("mpp_head.bias", 1, c.patch_dim);
  }
  if (c.confound_tokens > 0) {
    add("confound.weight", 1, d);
    add("confound.bias", 1, d);
  }
  return layout;
}

std::size_t param_count(const SiTConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, shape] : parameter_layout(config)) n += shape.size();
  return n;
}

}  // namespace sit::model
