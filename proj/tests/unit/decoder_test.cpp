// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "textcap/checkpoint.hpp"
#include "textcap/corpus.hpp"
#include "textcap/decoder.hpp"
#include "textcap/errors.hpp"
#include "textcap/toy_encoder.hpp"
#include "textcap/toy_grammar.hpp"
#include "textcap_test_support.hpp"

namespace textcap {
namespace {

using Ids = std::vector<TokenId>;

DecoderConfig tiny_config() {
  DecoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.model_dim = 8;
  cfg.ff_dim = 16;
  cfg.max_len = 10;
  cfg.dropout = 0.0;
  cfg.fusion_heads = 2;
  cfg.seed = 3;
  return cfg;
}

PrefixInput prefix_with_aux(std::mt19937_64& rng, Eigen::Index e, Eigen::Index objects) {
  PrefixInput p;
  p.v = testing::random_vector(e, rng);
  AuxiliaryInput aux;
  aux.query = testing::random_vector(e, rng);
  aux.objects.features = testing::random_matrix(objects, e, rng);
  aux.objects.tags.assign(static_cast<std::size_t>(objects), "x");
  p.aux = aux;
  return p;
}

// Tiny model, weights, inputs and captions written by
// tests/oracles/decoder_oracle.py together with its numpy losses.
struct OracleCase {
  DecoderModel model;
  PrefixInput v_only;
  PrefixInput with_aux;
  std::vector<Ids> captions;
};

OracleCase load_oracle() {
  const Checkpoint ckpt = read_checkpoint_file(testing::oracle_data("tiny_decoder.synk"));
  const auto meta = nlohmann::json::parse(ckpt.metadata_json);
  DecoderConfig cfg;
  cfg.layers = meta.at("layers");
  cfg.heads = meta.at("heads");
  cfg.model_dim = meta.at("model_dim");
  cfg.ff_dim = meta.at("ff_dim");
  cfg.max_len = meta.at("max_len");
  cfg.fusion_heads = meta.at("fusion_heads");
  cfg.dropout = 0.0;
  std::vector<std::pair<std::string, Matrix>> model_tensors;
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.rfind("model.", 0) == 0) model_tensors.emplace_back(name.substr(6), m);
  }
  OracleCase c{DecoderModel::from_tensors(cfg, meta.at("vocab_size"), meta.at("embed_dim"), model_tensors),
               {}, {}, meta.at("captions").get<std::vector<Ids>>()};
  c.v_only.v = ckpt.find("input.v")->row(0).transpose();
  c.with_aux.v = c.v_only.v;
  AuxiliaryInput aux;
  aux.query = ckpt.find("input.query")->row(0).transpose();
  aux.objects.features = *ckpt.find("input.objects");
  aux.objects.tags.assign(static_cast<std::size_t>(aux.objects.features.rows()), "x");
  c.with_aux.aux = aux;
  return c;
}

TEST(DecoderOracle, LossMatchesIndependentImplementation) {
  const OracleCase c = load_oracle();
  const double v_only[] = {2.88628784944793, 2.55030526769833, 2.54308590286715};
  const double fused[] = {2.65355977141453, 2.96356707113858, 2.61609621975549};
  ASSERT_EQ(c.captions.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(reconstruction_loss(c.model, c.v_only, c.captions[i]), v_only[i], 1e-5) << i;
    EXPECT_NEAR(reconstruction_loss(c.model, c.with_aux, c.captions[i]), fused[i], 1e-5) << i;
  }
}

TEST(DecoderOracle, EmptyObjectListMatches) {
  OracleCase c = load_oracle();
  c.with_aux.aux->objects.features = Matrix(0, c.with_aux.aux->objects.features.cols());
  c.with_aux.aux->objects.tags.clear();
  EXPECT_NEAR(reconstruction_loss(c.model, c.with_aux, c.captions[0]), 2.75171958492817, 1e-5);
}

TEST(DecoderForward, ShapeAndDeterminism) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(1);
  const PrefixInput p = prefix_with_aux(rng, 6, 2);
  const Ids tokens{1, 5, 7, 9};
  const Matrix a = forward(m, p, tokens);
  EXPECT_EQ(a.rows(), 6);
  EXPECT_EQ(a.cols(), 11);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, forward(m, p, tokens));
  PrefixInput v_only = p;
  v_only.aux.reset();
  EXPECT_EQ(forward(m, v_only, tokens).rows(), 5);
}

TEST(DecoderForward, CausalMask) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(2);
  const PrefixInput p = prefix_with_aux(rng, 6, 3);
  const Ids base{1, 5, 7, 9, 4, 6};
  const Matrix ref = forward(m, p, base);
  for (std::size_t k = 1; k < base.size(); ++k) {
    Ids changed = base;
    changed[k] = changed[k] == 8 ? 10 : 8;
    const Matrix out = forward(m, p, changed);
    const auto earlier = static_cast<Eigen::Index>(p.length() + k);
    EXPECT_LE((out.topRows(earlier) - ref.topRows(earlier)).cwiseAbs().maxCoeff(), 1e-6) << k;
    EXPECT_GT((out.row(earlier) - ref.row(earlier)).cwiseAbs().maxCoeff(), 0.0) << k;
  }
}

TEST(DecoderForward, AttentionRowsSumToOneAndAreCausal) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(3);
  AttentionMaps maps;
  forward(m, prefix_with_aux(rng, 6, 2), Ids{1, 4, 5, 6}, &maps);
  ASSERT_EQ(maps.size(), 1u);
  ASSERT_EQ(maps[0].size(), 2u);
  for (const Matrix& a : maps[0]) {
    ASSERT_EQ(a.rows(), 6);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-6);
      for (Eigen::Index j = i + 1; j < a.cols(); ++j) EXPECT_EQ(a(i, j), 0.0);
    }
  }
}

TEST(DecoderForward, AuxiliaryPrefixChangesOutput) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(4);
  PrefixInput a = prefix_with_aux(rng, 6, 2);
  PrefixInput b = a;
  b.aux->objects.features *= -1.0;
  EXPECT_NE(forward(m, a, Ids{1, 4}), forward(m, b, Ids{1, 4}));
}

TEST(DecoderForward, Errors) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(5);
  const PrefixInput p = prefix_with_aux(rng, 6, 1);
  EXPECT_THROW(forward(m, p, Ids{4, 5}), ValidationError);           // no BOS
  EXPECT_THROW(forward(m, p, Ids{1, 11}), ValidationError);          // unknown id
  EXPECT_THROW(forward(m, p, Ids(9, 4)), ValidationError);           // 2 + 9 > max_len
  PrefixInput bad = p;
  bad.v = Vector::Ones(5);
  EXPECT_THROW(forward(m, bad, Ids{1}), ValidationError);
  EXPECT_THROW(reconstruction_loss(m, p, Ids{1, 2}), ValidationError);  // empty caption
}

TEST(DecoderLoss, UniformLogitsGiveLogV) {
  DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  m.weights().head_w.setZero();
  m.weights().head_b.setZero();
  std::mt19937_64 rng(6);
  EXPECT_NEAR(reconstruction_loss(m, prefix_with_aux(rng, 6, 2), Ids{1, 5, 7, 2}), std::log(11.0), 1e-5);
}

TEST(DecoderLoss, PerfectModelGivesZero) {
  // Blocks contribute nothing, so the final hidden state at position p is
  // LayerNorm(one-hot p). The head maps each position to its gold token.
  DecoderConfig cfg = tiny_config();
  DecoderModel m = DecoderModel::init(cfg, 11, 6);
  DecoderWeights& w = m.weights();
  w.token_embedding.setZero();
  w.prefix_v_w.setZero();
  w.prefix_v_b.setZero();
  w.position_embedding = Matrix::Identity(10, 8).eval();
  for (auto& b : w.blocks) {
    b.w_attn_out.setZero();
    b.b_attn_out.setZero();
    b.w_ff2.setZero();
    b.b_ff2.setZero();
  }
  w.lnf_gain.setOnes();
  w.lnf_bias.setZero();
  const Ids caption{1, 5, 7, 9, 2};
  PrefixInput p;
  p.v = Vector::Ones(6);
  w.head_w.setZero();
  w.head_b.setZero();
  for (std::size_t k = 0; k + 1 < caption.size(); ++k) {
    RowVector e = RowVector::Zero(8);
    e(static_cast<Eigen::Index>(1 + k)) = 1.0;
    const RowVector centered = e.array() - e.mean();
    const RowVector h = centered / std::sqrt(centered.squaredNorm() / 8.0 + 1e-5);
    w.head_w.col(caption[k + 1]) += 1000.0 * h.transpose();
  }
  EXPECT_NEAR(reconstruction_loss(m, p, caption), 0.0, 1e-9);
}

TEST(DecoderLoss, PadTargetsAreMasked) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(7);
  const PrefixInput p = prefix_with_aux(rng, 6, 2);
  const Matrix logits = forward(m, p, Ids{1, 5, 2});
  double expected = 0.0;
  const Ids targets{5, 2};
  for (std::size_t k = 0; k < 2; ++k) {
    const auto r = logits.row(static_cast<Eigen::Index>(2 + k));
    expected += std::log((r.array() - r.maxCoeff()).exp().sum()) + r.maxCoeff() - r(targets[k]);
  }
  EXPECT_NEAR(reconstruction_loss(m, p, Ids{1, 5, 2, 0}), expected / 2.0, 1e-12);
}

TEST(DecoderGrad, MatchesFiniteDifferences) {
  DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(8);
  const PrefixInput p = prefix_with_aux(rng, 6, 3);
  const Ids caption{1, 5, 7, 9, 4, 2};
  const LossAndGrads lg = reconstruction_loss_and_grads(m, p, caption);
  EXPECT_NEAR(lg.loss, reconstruction_loss(m, p, caption), 1e-12);
  std::vector<std::pair<std::string, const Matrix*>> analytic;
  DecoderWeights::visit(lg.grads, [&](const std::string& name, const Matrix& g) { analytic.emplace_back(name, &g); });
  std::size_t i = 0;
  DecoderWeights::visit(m.weights(), [&](const std::string& name, Matrix& param) {
    ASSERT_EQ(analytic[i].first, name);
    const double err =
        testing::max_fd_error(param, *analytic[i].second, [&] { return reconstruction_loss(m, p, caption); });
    EXPECT_LE(err, 1e-3) << name;
    ++i;
  });
}

std::vector<TrainingExample> sixteen_captions(Vocabulary* vocab_out) {
  const auto records = generate_toy_corpus(ToyGrammar::standard(3), 16);
  const Vocabulary vocab = Vocabulary::build(records, 1);
  const ToyEncoderSpec spec{16, 5, 0.0, 0.0};
  std::vector<TrainingExample> data;
  for (const auto& r : records) {
    TrainingExample ex;
    ex.prefix.v = toy_text_encode(r.tokens, spec);
    ex.tokens = vocab.encode_caption(r.tokens);
    data.push_back(std::move(ex));
  }
  if (vocab_out) *vocab_out = vocab;
  return data;
}

DecoderConfig overfit_config() {
  DecoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.model_dim = 32;
  cfg.ff_dim = 64;
  cfg.max_len = 10;
  cfg.dropout = 0.0;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  cfg.fusion_heads = 2;
  cfg.seed = 11;
  return cfg;
}

TEST(DecoderTrain, OverfitsSixteenCaptions) {
  Vocabulary vocab;
  const auto data = sixteen_captions(&vocab);
  DecoderModel m = DecoderModel::init(overfit_config(), vocab.size(), 16);
  const TrainResult r = train(m, data);
  ASSERT_EQ(r.epoch_mean_loss.size(), 300u);
  EXPECT_LT(r.epoch_mean_loss.back(), 0.1);
  std::size_t upticks = 0;
  for (std::size_t e = 1; e < r.epoch_mean_loss.size(); ++e) {
    upticks += r.epoch_mean_loss[e] > r.epoch_mean_loss[e - 1] ? 1 : 0;
  }
  EXPECT_LE(static_cast<double>(upticks), 0.05 * static_cast<double>(r.epoch_mean_loss.size()));
  std::size_t exact = 0;
  for (const auto& ex : data) {
    const Ids out = generate(m, ex.prefix);
    const Ids gold(ex.tokens.begin() + 1, ex.tokens.end() - 1);
    exact += out == gold ? 1 : 0;
    EXPECT_EQ(generate(m, ex.prefix, DecodeStrategy::beam(1)), out);
  }
  EXPECT_GE(exact, 15u);
}

TEST(DecoderTrain, ZeroLearningRateLeavesParametersUnchanged) {
  Vocabulary vocab;
  const auto data = sixteen_captions(&vocab);
  DecoderConfig cfg = overfit_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.dropout = 0.1;
  DecoderModel m = DecoderModel::init(cfg, vocab.size(), 16);
  const auto before = m.named_tensors();
  train(m, data);
  EXPECT_EQ(m.named_tensors(), before);
}

TEST(DecoderTrain, DeterministicForSeed) {
  Vocabulary vocab;
  const auto data = sixteen_captions(&vocab);
  DecoderConfig cfg = overfit_config();
  cfg.epochs = 2;
  cfg.dropout = 0.1;
  DecoderModel a = DecoderModel::init(cfg, vocab.size(), 16);
  DecoderModel b = DecoderModel::init(cfg, vocab.size(), 16);
  const TrainResult ra = train(a, data);
  const TrainResult rb = train(b, data);
  EXPECT_EQ(ra.epoch_mean_loss, rb.epoch_mean_loss);
  EXPECT_EQ(a.named_tensors(), b.named_tensors());
}

TEST(DecoderTrain, EmptyDatasetRejected) {
  DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  EXPECT_THROW(train(m, std::vector<TrainingExample>{}), ValidationError);
}

TEST(DecoderGenerate, AllEqualLogitsFollowTieRule) {
  DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  m.weights().head_w.setZero();
  m.weights().head_b.setZero();
  PrefixInput p;
  p.v = Vector::Ones(6);
  EXPECT_TRUE(generate(m, p).empty());  // EOS is the lowest emittable id
  m.weights().head_b(0, Vocabulary::kEos) = -1.0;
  const Ids out = generate(m, p);
  EXPECT_EQ(out, Ids(10 - 1, 4));
  EXPECT_EQ(generate(m, p, DecodeStrategy::beam(1)), out);
}

TEST(DecoderGenerate, BeamIsDeterministic) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  std::mt19937_64 rng(9);
  const PrefixInput p = prefix_with_aux(rng, 6, 2);
  const Ids a = generate(m, p, DecodeStrategy::beam(5));
  EXPECT_EQ(a, generate(m, p, DecodeStrategy::beam(5)));
  EXPECT_LE(a.size(), 8u);
  for (TokenId t : a) {
    EXPECT_NE(t, Vocabulary::kBos);
    EXPECT_NE(t, Vocabulary::kEos);
    EXPECT_NE(t, Vocabulary::kPad);
  }
}

TEST(DecoderModelTest, NamedTensorsRoundTrip) {
  const DecoderModel m = DecoderModel::init(tiny_config(), 11, 6);
  const auto tensors = m.named_tensors();
  const DecoderModel back = DecoderModel::from_tensors(m.config(), 11, 6, tensors);
  EXPECT_EQ(back.named_tensors(), tensors);
  auto missing = tensors;
  missing.pop_back();
  EXPECT_THROW(DecoderModel::from_tensors(m.config(), 11, 6, missing), ValidationError);
  auto extra = tensors;
  extra.emplace_back("bogus", Matrix::Zero(1, 1));
  EXPECT_THROW(DecoderModel::from_tensors(m.config(), 11, 6, extra), ValidationError);
}

TEST(DecoderConfigTest, HeadsMustDivideModelDim) {
  DecoderConfig cfg = tiny_config();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_THROW(DecoderModel::init(cfg, 11, 6), ValidationError);
  const DecoderConfig defaults;
  EXPECT_EQ(defaults.layers, 4u);
  EXPECT_EQ(defaults.heads, 4u);
}

}  // namespace
}  // namespace textcap
