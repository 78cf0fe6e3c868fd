#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "../support/gradcheck.hpp"
#include "doctest.h"
#include "sit/model/sit_model.hpp"

using namespace sit;
using namespace sit::model;
using sit::testing::random_array;
using Dense = Eigen::MatrixXd;

namespace {

SiTConfig small_config(std::size_t layers, std::size_t heads, std::size_t hidden, std::size_t n,
                       std::size_t patch_dim) {
  SiTConfig c;
  c.variant = "custom";
  c.layers = layers;
  c.heads = heads;
  c.hidden = hidden;
  c.mlp = 4 * hidden;
  c.seq_len = n;
  c.patch_dim = patch_dim;
  return c;
}

void randomize(SiTModel<double>& m, std::mt19937_64& rng, double range = 0.5) {
  std::uniform_real_distribution<double> u(-range, range);
  for (auto& p : m.params())
    for (auto& v : p.value.values()) v = u(rng);
}

Dense dense(const Array<double>& a) { return a.mat(); }
Dense param(const SiTModel<double>& m, const std::string& name) {
  return dense(m.params()[m.params().index(name)].value);
}

// Straight-line reference implementations, written against Eigen directly.
Dense ref_layernorm(const Dense& x, const Dense& g, const Dense& b) {
  Dense y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      y(r, c) = (x(r, c) - mean) / std::sqrt(var + ad::kLayerNormEps) * g(0, c) + b(0, c);
  }
  return y;
}

Dense ref_softmax(const Dense& x) {
  Dense y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    double s = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) s += std::exp(x(r, c) - mx);
    for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = std::exp(x(r, c) - mx) / s;
  }
  return y;
}

Dense ref_gelu(const Dense& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1 + std::erf(v / std::sqrt(2.0))); });
}

Dense add_row(Dense x, const Dense& b) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) += b.row(0);
  return x;
}

Dense ref_block(const SiTModel<double>& m, std::size_t l, const Dense& x) {
  const std::string p = "blocks." + std::to_string(l) + ".";
  const auto& c = m.config();
  const Dense ln1 = ref_layernorm(x, param(m, p + "norm1.weight"), param(m, p + "norm1.bias"));
  const Dense q = add_row(ln1 * param(m, p + "attn.q.weight"), param(m, p + "attn.q.bias"));
  const Dense k = add_row(ln1 * param(m, p + "attn.k.weight"), param(m, p + "attn.k.bias"));
  const Dense v = add_row(ln1 * param(m, p + "attn.v.weight"), param(m, p + "attn.v.bias"));
  const auto dh = static_cast<Eigen::Index>(c.head_dim());
  Dense heads(x.rows(), x.cols());
  for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(c.heads); ++h) {
    const Dense qh = q.middleCols(h * dh, dh), kh = k.middleCols(h * dh, dh), vh = v.middleCols(h * dh, dh);
    heads.middleCols(h * dh, dh) = ref_softmax(qh * kh.transpose() / std::sqrt(double(dh))) * vh;
  }
  const Dense z = add_row(heads * param(m, p + "attn.o.weight"), param(m, p + "attn.o.bias")) + x;
  const Dense ln2 = ref_layernorm(z, param(m, p + "norm2.weight"), param(m, p + "norm2.bias"));
  const Dense f = ref_gelu(add_row(ln2 * param(m, p + "mlp.fc1.weight"), param(m, p + "mlp.fc1.bias")));
  return add_row(f * param(m, p + "mlp.fc2.weight"), param(m, p + "mlp.fc2.bias")) + z;
}

double max_abs(const Dense& a, const Dense& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("named variants satisfy the table invariants") {
  for (const auto& name : {"tiny", "small", "base"}) {
    const auto c = SiTConfig::named(name);
    CHECK(c.hidden == 64 * c.heads);
    CHECK(c.mlp == 4 * c.hidden);
    CHECK(c.layers == 12);
  }
  CHECK(SiTConfig::tiny().heads == 3);
  CHECK(SiTConfig::small().heads == 6);
  CHECK(SiTConfig::base().heads == 12);
  CHECK_THROWS_AS(SiTConfig::named("huge"), ConfigError);
  auto bad = SiTConfig::tiny();
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("param_count matches a closed-form tally") {
  // Independent tally: per block 2 LN (4D) + 4 D x D projections with bias
  // + FFN (D*M + M + M*D + D); embedding; reg token; positions; final LN;
  // head LN + D->D/2->1.
  auto tally = [](std::size_t d, std::size_t m, std::size_t layers, std::size_t n, std::size_t p) {
    const std::size_t block = 4 * d + 4 * (d * d + d) + d * m + m + m * d + d;
    return layers * block + (p * d + d) + d + (n + 1) * d + 2 * d + 2 * d + (d * (d / 2) + d / 2) + (d / 2 + 1);
  };
  CHECK(param_count(SiTConfig::tiny()) == tally(192, 768, 12, 320, 612));
  CHECK(param_count(SiTConfig::small()) == tally(384, 1536, 12, 320, 612));
  CHECK(param_count(SiTConfig::base()) == tally(768, 3072, 12, 320, 612));
  auto with_mpp = SiTConfig::tiny();
  with_mpp.mpp_head = true;
  CHECK(param_count(with_mpp) == param_count(SiTConfig::tiny()) + 192 + 192 * 612 + 612);
  SiTModel<float> m(SiTConfig::tiny());
  CHECK(m.params().scalar_count() == param_count(SiTConfig::tiny()));
}

TEST_CASE("embed_sequence layout") {
  std::mt19937_64 rng(1);
  SiTModel<double> m(small_config(1, 1, 8, 5, 6));
  SUBCASE("zero projection, bias and positions leave only the regression token") {
    auto& reg = m.params()[m.index().reg_token].value;
    for (auto& v : reg.values()) v = 0.25;
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    const auto& x = m.embed_sequence(pass, random_array(5, 6, rng)).value();
    CHECK(x.shape() == ad::Shape{6, 8});
    for (std::size_t c = 0; c < 8; ++c) CHECK(x(0, c) == 0.25);
    for (std::size_t r = 1; r < 6; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(x(r, c) == 0.0);
  }
  SUBCASE("extra token appended verbatim, no positional embedding") {
    randomize(m, rng);
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    const auto extra = random_array(1, 8, rng);
    const Var<double> extras[] = {tape.constant(extra)};
    const auto& x = m.embed_sequence(pass, random_array(5, 6, rng), extras).value();
    CHECK(x.shape() == ad::Shape{7, 8});
    for (std::size_t c = 0; c < 8; ++c) CHECK(x(6, c) == extra[c]);
  }
  SUBCASE("dimension mismatch") {
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    CHECK_THROWS_AS(m.embed_sequence(pass, random_array(5, 7, rng)), ShapeError);
    CHECK_THROWS_AS(m.embed_sequence(pass, random_array(4, 6, rng)), ShapeError);
  }
  SUBCASE("default geometry gives 321 rows") {
    SiTModel<float> big(SiTConfig::tiny());
    Tape<float> tape(false);
    Pass<float> pass(tape, big.params());
    CHECK(big.embed_sequence(pass, Array<float>(320, 612)).shape() == ad::Shape{321, 192});
  }
}

TEST_CASE("self-attention reference cases") {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  SUBCASE("single token attends to itself") {
    auto x = tape.constant(random_array(1, 4, rng));
    auto wv = tape.constant(random_array(4, 4, rng));
    auto a = self_attention(x, tape.constant(random_array(4, 4, rng)), tape.constant(random_array(4, 4, rng)), wv);
    CHECK(a.weights.value()[0] == 1.0);
    const Dense v = dense(x.value()) * dense(wv.value());
    CHECK(max_abs(dense(a.output.value()), v) == 0.0);
  }
  SUBCASE("zero queries give uniform attention") {
    auto x = tape.constant(random_array(6, 4, rng));
    auto wv = tape.constant(random_array(4, 4, rng));
    auto a = self_attention(x, tape.constant(Array<double>(4, 4)), tape.constant(random_array(4, 4, rng)), wv);
    for (double w : a.weights.value().values()) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-15));
    const Dense v = dense(x.value()) * dense(wv.value());
    const Dense mean = v.colwise().mean();
    for (Eigen::Index r = 0; r < 6; ++r) CHECK((dense(a.output.value()).row(r) - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("hand-set 2x2 against a dense evaluation") {
    Array<double> x(ad::Shape{2, 2}, {1.0, 2.0, -0.5, 0.25});
    Array<double> wq(ad::Shape{2, 2}, {0.3, -0.2, 0.1, 0.4});
    Array<double> wk(ad::Shape{2, 2}, {-0.6, 0.5, 0.2, 0.1});
    Array<double> wv(ad::Shape{2, 2}, {1.0, 0.0, 0.5, -1.0});
    auto a = self_attention(tape.constant(x), tape.constant(wq), tape.constant(wk), tape.constant(wv));
    const Dense q = dense(x) * dense(wq), k = dense(x) * dense(wk), v = dense(x) * dense(wv);
    Dense logits = q * k.transpose() / std::sqrt(2.0);
    Dense w(2, 2);
    for (int r = 0; r < 2; ++r) {
      const double e0 = std::exp(logits(r, 0)), e1 = std::exp(logits(r, 1));
      w(r, 0) = e0 / (e0 + e1);
      w(r, 1) = e1 / (e0 + e1);
    }
    CHECK(max_abs(dense(a.output.value()), w * v) < 1e-6);
    CHECK(max_abs(dense(a.weights.value()), w) < 1e-12);
  }
}

TEST_CASE("single-head MSA with identity output projection reduces to self-attention") {
  std::mt19937_64 rng(3);
  SiTModel<double> m(small_config(1, 1, 6, 3, 4));
  randomize(m, rng);
  const auto& b = m.index().blocks[0];
  for (auto i : {b.q_b, b.k_b, b.v_b, b.o_b}) m.params()[i].value.fill(0);
  auto& wo = m.params()[b.o_w].value;
  wo.fill(0);
  for (std::size_t i = 0; i < 6; ++i) wo(i, i) = 1;
  Tape<double> tape;
  Pass<double> pass(tape, m.params());
  auto x = tape.constant(random_array(4, 6, rng));
  const auto& out = m.msa(pass, 0, x).value();
  auto ref = self_attention(x, pass.param(b.q_w), pass.param(b.k_w), pass.param(b.v_w));
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == ref.output.value()[i]);
}

TEST_CASE("MSA is permutation equivariant on raw inputs") {
  std::mt19937_64 rng(4);
  SiTModel<double> m(small_config(1, 3, 12, 3, 4));
  randomize(m, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_array(7, 12, rng);
    std::vector<std::uint32_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    auto xv = tape.constant(x);
    const auto y = m.msa(pass, 0, xv).value();
    const auto& yp = m.msa(pass, 0, ad::gather_rows<double>(xv, perm)).value();
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 12; ++c) CHECK(std::abs(yp(r, c) - y(perm[r], c)) < 1e-12);
  }
  SiTModel<float> tiny(SiTConfig::tiny());
  Tape<float> tape(false);
  Pass<float> pass(tape, tiny.params());
  CHECK(tiny.msa(pass, 0, tape.constant(Array<float>(321, 192, 0.5f))).shape() == ad::Shape{321, 192});
}

TEST_CASE("transformer block") {
  std::mt19937_64 rng(5);
  SUBCASE("zero weights are a pure residual") {
    SiTModel<double> m(small_config(2, 2, 8, 3, 4));
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    const auto x = random_array(4, 8, rng);
    auto y = tape.constant(x);
    for (std::size_t l = 0; l < 2; ++l) y = m.block(pass, l, y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x[i]);
  }
  SUBCASE("matches the straight-line dense oracle") {
    SiTModel<double> m(small_config(2, 2, 8, 3, 4));
    randomize(m, rng);
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    const auto x = random_array(5, 8, rng);
    auto y = tape.constant(x);
    Dense ref = dense(x);
    for (std::size_t l = 0; l < 2; ++l) {
      y = m.block(pass, l, y);
      ref = ref_block(m, l, ref);
      CHECK(y.shape() == ad::Shape{5, 8});
      CHECK(max_abs(dense(y.value()), ref) < 1e-6);
    }
  }
}

TEST_CASE("forward_regress behaviour") {
  std::mt19937_64 rng(6);
  auto cfg = small_config(2, 2, 16, 12, 9);
  SiTModel<float> m(cfg);
  ad::Rng init_rng(7);
  m.init(init_rng);
  const auto tokens = random_array(12, 9, rng).cast<float>();
  const double a = m.predict(tokens);
  const double b = m.predict(tokens);
  CHECK(std::isfinite(a));
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);

  SiTModel<double> md(cfg);
  randomize(md, rng, 0.3);
  const auto td = random_array(12, 9, rng);
  const double base = md.predict(td);
  for (int probe = 0; probe < 10; ++probe) {
    auto t = td;
    const auto patch = std::uniform_int_distribution<std::size_t>(0, 11)(rng);
    for (std::size_t c = 0; c < 9; ++c) t(patch, c) += 0.5;
    CHECK(md.predict(t) != base);
  }
}

TEST_CASE("attention record rows are distributions") {
  std::mt19937_64 rng(8);
  SiTModel<float> m(small_config(3, 4, 16, 10, 5));
  ad::Rng init_rng(9);
  m.init(init_rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tape<float> tape(false);
    Pass<float> pass(tape, m.params());
    AttentionRecord rec;
    pass.record = &rec;
    const Var<float> extra[] = {tape.constant(random_array(1, 16, rng).cast<float>())};
    m.forward_regress(pass, random_array(10, 5, rng, -3, 3).cast<float>(), extra);
    REQUIRE(rec.layers.size() == 3);
    CHECK(rec.sequence_length() == 12);
    for (const auto& layer : rec.layers) {
      REQUIRE(layer.size() == 4);
      for (const auto& a : layer) {
        CHECK(a.shape() == ad::Shape{12, 12});
        for (std::size_t r = 0; r < 12; ++r) {
          double s = 0;
          for (double w : a.row(r)) {
            CHECK(w >= 0);
            s += w;
          }
          CHECK(std::abs(s - 1) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("forward_mpp") {
  std::mt19937_64 rng(10);
  SUBCASE("default geometry shape") {
    auto cfg = SiTConfig::tiny();
    cfg.layers = 1;
    cfg.mpp_head = true;
    SiTModel<float> m(cfg);
    Tape<float> tape(false);
    Pass<float> pass(tape, m.params());
    auto seq = m.embed_sequence(pass, Array<float>(320, 612, 1.0f));
    const auto& out = m.forward_mpp(pass, seq).value();
    CHECK(out.shape() == ad::Shape{320, 612});
    for (float v : out.values()) CHECK(v == 0.0f);  // zero-weight head
  }
  SUBCASE("masked MSE against a dense oracle") {
    auto cfg = small_config(1, 2, 8, 6, 5);
    cfg.mpp_head = true;
    SiTModel<double> m(cfg);
    randomize(m, rng);
    const auto tokens = random_array(6, 5, rng);
    const auto target = random_array(6, 5, rng);
    const std::vector<std::uint8_t> mask{1, 0, 0, 1, 1, 0};
    Tape<double> tape;
    Pass<double> pass(tape, m.params());
    auto rec = m.forward_mpp(pass, m.embed_sequence(pass, tokens));
    const double loss = ad::mse(rec, target, std::span<const std::uint8_t>(mask)).value()[0];

    Dense x = add_row(dense(tokens) * param(m, "patch_embed.weight"), param(m, "patch_embed.bias"));
    Dense seq(7, 8);
    seq.row(0) = param(m, "reg_token");
    seq.bottomRows(6) = x;
    seq += param(m, "pos_embed");
    seq = ref_block(m, 0, seq);
    seq = ref_layernorm(seq, param(m, "norm.weight"), param(m, "norm.bias"));
    const Dense out = add_row(seq.bottomRows(6) * param(m, "mpp_head.weight"), param(m, "mpp_head.bias"));
    double sum = 0;
    int count = 0;
    for (int r = 0; r < 6; ++r) {
      if (!mask[r]) continue;
      for (int c = 0; c < 5; ++c) {
        sum += (out(r, c) - target(r, c)) * (out(r, c) - target(r, c));
        ++count;
      }
    }
    CHECK(std::abs(loss - sum / count) < 1e-6);
  }
}

TEST_CASE("full tiny-config gradient check") {
  std::mt19937_64 rng(11);
  auto cfg = small_config(1, 1, 8, 4, 6);
  cfg.mpp_head = true;
  cfg.confound_tokens = 1;
  SiTModel<double> m(cfg);
  randomize(m, rng);
  const auto tokens = random_array(4, 6, rng);
  const auto target = random_array(4, 6, rng);
  const Array<double> label(1, 1, 0.7);
  const Array<double> confound(1, 1, -0.4);
  const std::vector<std::uint32_t> corrupt{4, 1, 0, 4};  // row 4 = mask token
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  const auto& ix = m.index();

  // regression with a confound token + masked patch prediction, so every
  // tensor (mask token and confound projection included) carries gradient
  auto loss = [&](Pass<double>& pass) {
    auto& tape = pass.tape();
    auto ctoken = ad::linear(tape.constant(confound), pass.param(*ix.confound_w), pass.param(*ix.confound_b));
    const Var<double> extras[] = {ctoken};
    auto reg = ad::mse(m.forward_regress(pass, tokens, extras), label);
    const Var<double> rows[] = {m.embed_patches(pass, tokens), pass.param(*ix.mask_token)};
    auto corrupted = ad::gather_rows<double>(ad::concat_rows<double>(rows), corrupt);
    auto mpp = ad::mse(m.forward_mpp(pass, m.assemble(pass, corrupted)), target, std::span<const std::uint8_t>(mask));
    return ad::add(reg, mpp);
  };
  auto value = [&] {
    Tape<double> tape(false);
    Pass<double> pass(tape, m.params());
    return loss(pass).value()[0];
  };

  auto grads = ad::zero_gradients(m.params());
  {
    Tape<double> tape;
    Pass<double> pass(tape, m.params(), &grads);
    tape.backward(loss(pass));
  }
  const double h = 1e-5;
  for (std::size_t k = 0; k < m.params().size(); ++k) {
    auto& p = m.params()[k].value;
    Array<double> numeric(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double x0 = p[i];
      p[i] = x0 + h;
      const double up = value();
      p[i] = x0 - h;
      const double down = value();
      p[i] = x0;
      numeric[i] = (up - down) / (2 * h);
    }
    const double err = sit::testing::relative_error(grads[k], numeric);
    INFO(m.params()[k].name << " relative error " << err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("frozen parameters receive no gradient") {
  std::mt19937_64 rng(12);
  SiTModel<double> m(small_config(1, 1, 8, 4, 6));
  randomize(m, rng);
  const auto mask = m.head_only_mask();
  auto grads = ad::zero_gradients(m.params());
  Tape<double> tape;
  Pass<double> pass(tape, m.params(), &grads, mask);
  tape.backward(ad::mse(m.forward_regress(pass, random_array(4, 6, rng)), Array<double>(1, 1, 3.0)));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    double norm = 0;
    for (double g : grads[k].values()) norm += std::abs(g);
    if (mask[k]) {
      CHECK(norm > 0);
    } else {
      CHECK(norm == 0);
    }
  }
}

TEST_CASE("checkpoint round trip restores predictions") {
  std::mt19937_64 rng(13);
  auto cfg = small_config(2, 2, 8, 4, 6);
  cfg.dropout = 0.1;
  SiTModel<float> m(cfg);
  ad::Rng init_rng(14);
  m.init(init_rng);
  const auto bytes = ad::encode_checkpoint(m.to_checkpoint());
  const auto ckpt = ad::decode_checkpoint(bytes);
  const auto back_cfg = config_from_checkpoint(ckpt);
  CHECK(back_cfg.layers == 2);
  CHECK(back_cfg.dropout == 0.1);
  SiTModel<float> back(back_cfg);
  CHECK(back.load(ckpt) == back.params().size());
  const auto t = random_array(4, 6, rng).cast<float>();
  CHECK(back.predict(t) == m.predict(t));

  auto other = cfg;
  other.hidden = 12;
  SiTModel<float> wrong(other);
  CHECK_THROWS_AS(wrong.load(ckpt), ShapeError);
  auto extended = cfg;
  extended.mpp_head = true;
  SiTModel<float> ext(extended);
  CHECK_THROWS_AS(ext.load(ckpt), DataError);
  CHECK(ext.load(ckpt, true) == m.params().size());
}
