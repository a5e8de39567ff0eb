// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "textcap/corpus.hpp"
#include "textcap/errors.hpp"
#include "textcap/rng.hpp"
#include "textcap/toy_encoder.hpp"
#include "textcap/toy_grammar.hpp"

namespace textcap {
namespace {

using Tokens = std::vector<std::string>;

const ToyEncoderSpec kSpec{64, 7, 0.5, 0.1};

// Golden values from tests/oracles/toy_encoder_oracle.py.
TEST(ToyEncoder, CatDogCosineGolden) {
  const Vector cat = toy_text_encode(Tokens{"cat"}, kSpec);
  const Vector dog = toy_text_encode(Tokens{"dog"}, kSpec);
  const double c = cat.dot(dog);
  EXPECT_LT(c, 1.0);
  EXPECT_NEAR(c, 0.275719701861714, 1e-12);
}

TEST(ToyEncoder, TextVectorLeadingEntriesGolden) {
  const Vector cat = toy_text_encode(Tokens{"cat"}, kSpec);
  EXPECT_NEAR(cat(0), 0.00976456293121986, 1e-14);
  EXPECT_NEAR(cat(1), 0.0570120077576753, 1e-14);
  EXPECT_NEAR(cat(2), -0.159961680956799, 1e-14);
  EXPECT_NEAR(cat(3), -0.223417608209965, 1e-14);
}

TEST(ToyEncoder, GapDirectionGolden) {
  const Vector g = toy_gap_direction(kSpec);
  EXPECT_NEAR(g(0), -0.0274383626120168, 1e-14);
  EXPECT_NEAR(g(3), -0.213673488451871, 1e-14);
  EXPECT_NEAR(g.norm(), 1.0, 1e-12);
}

TEST(ToyEncoder, ImageVectorGolden) {
  const Vector img = toy_image_encode(Tokens{"a", "red", "dog"}, 3, kSpec);
  EXPECT_NEAR(img(0), 0.132328927145188, 1e-14);
  EXPECT_NEAR(img(1), -0.21498517858492, 1e-14);
  EXPECT_NEAR(img(2), -0.0967545205202101, 1e-14);
  EXPECT_NEAR(img(3), -0.105426836172484, 1e-14);
}

TEST(ToyEncoder, NormalStreamGolden) {
  NormalStream s(7 ^ 3);
  EXPECT_NEAR(s.next(), 0.828982135013699, 1e-14);
  EXPECT_NEAR(s.next(), -0.664936931563064, 1e-14);
  EXPECT_NEAR(s.next(), -1.97716773072572, 1e-14);
}

TEST(ToyEncoder, DeterministicAndUnitNorm) {
  const Tokens t{"a", "blue", "horse"};
  const Vector a = toy_text_encode(t, kSpec);
  const Vector b = toy_text_encode(t, kSpec);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.norm(), 1.0, 1e-6);
  const Vector i1 = toy_image_encode(t, 11, kSpec);
  EXPECT_EQ(i1, toy_image_encode(t, 11, kSpec));
  EXPECT_NEAR(i1.norm(), 1.0, 1e-6);
  EXPECT_NE(i1, toy_image_encode(t, 12, kSpec));
}

TEST(ToyEncoder, SeedChangesVectors) {
  ToyEncoderSpec other = kSpec;
  other.seed = 8;
  EXPECT_NE(toy_text_encode(Tokens{"cat"}, kSpec), toy_text_encode(Tokens{"cat"}, other));
}

TEST(ToyEncoder, EmptyTokensAndBadSpecRejected) {
  EXPECT_THROW(toy_text_encode(Tokens{}, kSpec), ValidationError);
  EXPECT_THROW(toy_image_encode(Tokens{}, 0, kSpec), ValidationError);
  EXPECT_THROW(toy_text_encode(Tokens{"x"}, ToyEncoderSpec{1, 0, 0, 0}), ValidationError);
  EXPECT_THROW(toy_text_encode(Tokens{"x"}, ToyEncoderSpec{4, 0, -1.0, 0}), ValidationError);
}

TEST(ToyEncoder, NoGapNoNoiseEqualsText) {
  const ToyEncoderSpec spec{64, 7, 0.0, 0.0};
  const Tokens t{"the", "green", "cat"};
  EXPECT_EQ(toy_image_encode(t, 5, spec), toy_text_encode(t, spec));
}

std::vector<std::vector<std::string>> toy_tokens(std::size_t n) {
  return token_lists(generate_toy_corpus(ToyGrammar::standard(1), n));
}

TEST(ToyEncoder, NoiselessMeanOffsetIsParallelToGap) {
  const ToyEncoderSpec spec{64, 7, 0.5, 0.0};
  const auto tokens = toy_tokens(200);
  const Matrix img = toy_encode_images(tokens, spec).to_matrix();
  const Matrix txt = toy_encode_texts(tokens, spec).to_matrix();
  const Vector mean_diff = (img - txt).colwise().mean().transpose();
  const Vector g = toy_gap_direction(spec);
  // Renormalization adds a small component along the text centroid, so the
  // offset is parallel to g only up to that term.
  EXPECT_GT(mean_diff.normalized().dot(g), 0.98);
}

TEST(ToyEncoder, CentroidDistanceShrinksMonotonicallyWithGap) {
  const auto tokens = toy_tokens(200);
  double previous = std::numeric_limits<double>::infinity();
  for (double gamma : {1.0, 0.5, 0.25, 0.1, 0.01}) {
    const ToyEncoderSpec spec{64, 7, gamma, 0.0};
    const Matrix img = toy_encode_images(tokens, spec).to_matrix();
    const Matrix txt = toy_encode_texts(tokens, spec).to_matrix();
    const double dist = (img.colwise().mean() - txt.colwise().mean()).norm();
    EXPECT_GT(dist, 0.0);
    EXPECT_LT(dist, previous) << "gamma " << gamma;
    previous = dist;
  }
  const ToyEncoderSpec off{64, 7, 0.0, 0.0};
  EXPECT_EQ((toy_encode_images(tokens, off).to_matrix().colwise().mean() -
             toy_encode_texts(tokens, off).to_matrix().colwise().mean())
                .norm(),
            0.0);
}

TEST(ToyEncoder, PairedCosineBeatsUnpairedOnToyCorpus) {
  const auto tokens = toy_tokens(500);
  const Matrix img = toy_encode_images(tokens, kSpec).to_matrix();
  const Matrix txt = toy_encode_texts(tokens, kSpec).to_matrix();
  const Matrix sim = img * txt.transpose();  // all rows are unit
  double margin_sum = 0.0;
  const auto n = sim.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double off = (sim.row(i).sum() - sim(i, i)) / static_cast<double>(n - 1);
    margin_sum += sim(i, i) - off;
  }
  EXPECT_GT(margin_sum / static_cast<double>(n), 0.0);
}

TEST(ToyEncoder, ImageBatchUsesIndexOffset) {
  const auto tokens = toy_tokens(4);
  const Matrix shifted = toy_encode_images(tokens, kSpec, 100).to_matrix();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Vector expected = toy_image_encode(tokens[i], 100 + i, kSpec);
    EXPECT_TRUE(shifted.row(static_cast<Eigen::Index>(i)).transpose().isApprox(expected, 1e-6));
  }
}

}  // namespace
}  // namespace textcap
