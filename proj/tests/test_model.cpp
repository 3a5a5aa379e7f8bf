#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "sktune/checkpoint.hpp"
#include "sktune/data.hpp"
#include "sktune/model.hpp"
#include "sktune/ops.hpp"
#include "support.hpp"

using namespace sktune;
using namespace sktune::testing;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.max_seq = 24;
  c.seed = 3;
  return c;
}

KvPrefix random_prefix(const ModelConfig& c, std::size_t l, std::mt19937_64& rng) {
  KvPrefix p;
  for (std::size_t j = 0; j < c.n_layers; ++j)
    p.layers.push_back({random_tensor({l, c.d_model}, rng, 1.0), random_tensor({l, c.d_model}, rng, 1.0)});
  return p;
}

}  // namespace

TEST(Model, ReferenceParameterCount) {
  FrozenModel model = FrozenModel::initialize(ModelConfig{});
  // 64·32 + 64·32 + 2·(4·32² + 4·32 + 32·64 + 64 + 64·32 + 32) + 2·32
  EXPECT_EQ(model.parameter_count(), 20992u);
  for (const auto& [name, t] : model.params()) EXPECT_FALSE(t.requires_grad()) << name;
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny_config();
  c.n_heads = 3;
  EXPECT_EQ(error_kind([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

TEST(Embed, GatherContract) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  EXPECT_EQ(embed(model, std::vector<int>{}).shape(), (Shape{0, 8}));
  const std::vector<int> a{3, 1}, b{7, 0, 15};
  std::vector<int> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  EXPECT_TRUE(bitwise_equal(embed(model, ab), concat(embed(model, a), embed(model, b), 0)));
  Tensor e = embed(model, ab);
  for (std::size_t i = 0; i < ab.size(); ++i)
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(e.at(i, k), model.token_embedding().at(ab[i], k));
  EXPECT_EQ(error_kind([&] { embed(model, std::vector<int>{16}); }), ErrorKind::TokenOutOfRange);
}

TEST(Forward, EmptyPrefixIsBitwiseIdentity) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor e = embed(model, random_ids(1 + rng() % 10, 16, rng));
    Tensor plain = forward(model, e).hidden;
    Tensor zero = forward(model, e, KvPrefix::zero_length(model.config())).hidden;
    EXPECT_TRUE(bitwise_equal(plain, zero));
  }
}

TEST(Forward, Causality) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  std::mt19937_64 rng(12);
  const auto ids = random_ids(7, 16, rng);
  Tensor base_emb = embed(model, ids);
  Tensor base = forward(model, base_emb).hidden;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    Tensor e = base_emb.clone();
    for (std::size_t k = 0; k < 8; ++k) e.mutable_data()[t * 8 + k] += 0.5;
    Tensor out = forward(model, e).hidden;
    for (std::size_t row = 0; row < ids.size(); ++row) {
      bool same = true;
      for (std::size_t k = 0; k < 8; ++k) same = same && out.at(row, k) == base.at(row, k);
      EXPECT_EQ(same, row < t) << "perturbed " << t << ", row " << row;
    }
  }
}

TEST(Forward, AttentionRowsSumToOne) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  std::mt19937_64 rng(13);
  const std::size_t n = 5, l = 3;
  KvPrefix prefix = random_prefix(model.config(), l, rng);
  ForwardOptions opts;
  opts.capture_attention = true;
  auto result = forward(model, embed(model, random_ids(n, 16, rng)), prefix, opts);
  ASSERT_TRUE(result.attention.has_value());
  const Tensor& a = *result.attention;
  ASSERT_EQ(a.shape(), (Shape{2, 2, n, l + n}));
  const auto data = a.data();
  for (std::size_t row = 0; row < data.size() / (l + n); ++row) {
    double s = 0.0;
    for (std::size_t c = 0; c < l + n; ++c) s += data[row * (l + n) + c];
    EXPECT_NEAR(s, 1.0, 1e-9);
    const std::size_t i = row % n;
    for (std::size_t c = l + i + 1; c < l + n; ++c) EXPECT_EQ(data[row * (l + n) + c], 0.0);
    for (std::size_t c = 0; c < l; ++c) EXPECT_GT(data[row * (l + n) + c], 0.0);
  }
}

TEST(Forward, ZeroValuePrefixStillChangesOutput) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  std::mt19937_64 rng(14);
  KvPrefix prefix = random_prefix(model.config(), 2, rng);
  for (auto& layer : prefix.layers) layer.values = Tensor::zeros(layer.values.shape());
  Tensor e = embed(model, random_ids(4, 16, rng));
  EXPECT_GT(max_abs_diff(forward(model, e).hidden, forward(model, e, prefix).hidden), 1e-6);
}

TEST(Forward, Errors) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  std::mt19937_64 rng(15);
  EXPECT_EQ(error_kind([&] { forward(model, embed(model, random_ids(25, 16, rng))); }), ErrorKind::SequenceTooLong);
  KvPrefix prefix = random_prefix(model.config(), 2, rng);
  prefix.layers.pop_back();
  EXPECT_EQ(error_kind([&] { forward(model, embed(model, random_ids(3, 16, rng)), prefix); }),
            ErrorKind::PrefixLayerMismatch);
}

TEST(ExtractLayerStates, FirstLayerIsEmbeddingPlusPosition) {
  ModelConfig c = tiny_config();
  c.n_layers = 1;
  FrozenModel model = FrozenModel::initialize(c);
  const std::vector<int> prompt{4, 9, 2};
  Tensor h = extract_layer_states(model, prompt);
  ASSERT_EQ(h.shape(), (Shape{1, 3, 8}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 8; ++k)
      EXPECT_EQ(h.data()[i * 8 + k], model.token_embedding().at(prompt[i], k) + model.position_embedding().at(i, k));
}

TEST(ExtractLayerStates, ShapeDeterminismAndNoGradient) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  model.unfreeze();
  const std::vector<int> prompt{1, 2, 3, 4};
  Tape tape;
  TapeScope scope(&tape);
  Tensor a = extract_layer_states(model, prompt);
  Tensor b = extract_layer_states(model, prompt);
  EXPECT_EQ(a.shape(), (Shape{2, 4, 8}));
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_FALSE(a.requires_grad());
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(error_kind([&] { extract_layer_states(model, std::vector<int>(25, 1)); }), ErrorKind::SequenceTooLong);
}

TEST(Pretrain, StepsZeroIsInitialization) {
  std::mt19937_64 rng(16);
  std::vector<TokenSequence> corpus{random_ids(10, 16, rng)};
  PretrainOptions opts;
  opts.steps = 0;
  FrozenModel trained = pretrain(tiny_config(), corpus, opts);
  FrozenModel init = FrozenModel::initialize(tiny_config());
  EXPECT_TRUE(trained.frozen());
  for (const auto& [name, t] : init.params()) EXPECT_TRUE(bitwise_equal(t, trained.param(name))) << name;
}

TEST(Pretrain, DeterministicAndRejectsBadTokens) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(17);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back(random_ids(12, 16, rng));
  PretrainOptions opts;
  opts.steps = 5;
  FrozenModel a = pretrain(c, corpus, opts), b = pretrain(c, corpus, opts);
  EXPECT_EQ(serialize_checkpoint(model_checkpoint(a)), serialize_checkpoint(model_checkpoint(b)));
  corpus[0][0] = 16;
  EXPECT_EQ(error_kind([&] { pretrain(c, corpus, opts); }), ErrorKind::TokenOutOfRange);
}

TEST(Pretrain, BeatsUniformOnHeldOutSyntheticLanguage) {
  const Vocab vocab = synthetic_vocab();
  auto corpus = gen_pretrain_corpus(vocab, 2000, 24, 0);
  const std::size_t held = corpus.size() / 10;
  std::vector<TokenSequence> train(corpus.begin(), corpus.end() - held), test(corpus.end() - held, corpus.end());
  FrozenModel model = pretrain(ModelConfig{}, train, PretrainOptions{});
  const double loss = lm_loss(model, test);
  EXPECT_LT(loss, std::log(64.0));
  std::printf("held-out loss %.4f\n", loss);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  FrozenModel model = FrozenModel::initialize(tiny_config());
  Checkpoint ck = model_checkpoint(model);
  ck.params.emplace("zz.edge", Tensor::vector({-0.0, 1e-300, -1.7976931348623157e308, 0.1, 1.0 / 3.0}));
  const std::string text = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(text);
  EXPECT_EQ(serialize_checkpoint(back), text);
  EXPECT_TRUE(std::signbit(back.params.at("zz.edge").data()[0]));
  for (const auto& [name, t] : ck.params) EXPECT_TRUE(bitwise_equal(t, back.params.at(name))) << name;
  FrozenModel reloaded = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(model_checkpoint(model))));
  EXPECT_EQ(reloaded.config(), model.config());
  EXPECT_TRUE(reloaded.frozen());
}

TEST(Checkpoint, RejectsMalformed) {
  EXPECT_EQ(error_kind([] { parse_checkpoint("{"); }), ErrorKind::MalformedLine);
  EXPECT_EQ(error_kind([] { parse_checkpoint(R"({"format":"XYZ","params":{}})"); }), ErrorKind::MalformedLine);
  EXPECT_EQ(error_kind([] { format_double(std::nan("")); }), ErrorKind::NonFinite);
}
