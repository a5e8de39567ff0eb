// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "textcap/corpus.hpp"
#include "textcap/fusion.hpp"
#include "textcap/tensor.hpp"

namespace textcap {

struct DecoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 256;
  std::size_t ff_dim = 1024;
  std::size_t max_len = 32;
  double dropout = 0.1;
  double learning_rate = 2e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t fusion_heads = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BlockWeights {
  Matrix ln1_gain, ln1_bias;
  Matrix w_qkv, b_qkv;  // D x 3D, 1 x 3D
  Matrix w_attn_out, b_attn_out;
  Matrix ln2_gain, ln2_bias;
  Matrix w_ff1, b_ff1;  // D x F
  Matrix w_ff2, b_ff2;  // F x D

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1_gain", self.ln1_gain);
    f(prefix + "ln1_bias", self.ln1_bias);
    f(prefix + "w_qkv", self.w_qkv);
    f(prefix + "b_qkv", self.b_qkv);
    f(prefix + "w_attn_out", self.w_attn_out);
    f(prefix + "b_attn_out", self.b_attn_out);
    f(prefix + "ln2_gain", self.ln2_gain);
    f(prefix + "ln2_bias", self.ln2_bias);
    f(prefix + "w_ff1", self.w_ff1);
    f(prefix + "b_ff1", self.b_ff1);
    f(prefix + "w_ff2", self.w_ff2);
    f(prefix + "b_ff2", self.b_ff2);
  }
};

// Every trainable tensor. Gradients use the same struct.
struct DecoderWeights {
  Matrix token_embedding;     // V x D
  Matrix position_embedding;  // max_len x D
  Matrix prefix_v_w, prefix_v_b;  // E x D, 1 x D
  Matrix prefix_u_w, prefix_u_b;
  std::vector<BlockWeights> blocks;
  Matrix lnf_gain, lnf_bias;
  Matrix head_w, head_b;  // D x V, 1 x V
  FusionParams fusion;

  DecoderWeights zeros_like() const;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("position_embedding"), self.position_embedding);
    f(std::string("prefix_v_w"), self.prefix_v_w);
    f(std::string("prefix_v_b"), self.prefix_v_b);
    f(std::string("prefix_u_w"), self.prefix_u_w);
    f(std::string("prefix_u_b"), self.prefix_u_b);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      BlockWeights::visit(self.blocks[i], "blocks." + std::to_string(i) + ".", f);
    }
    f(std::string("lnf_gain"), self.lnf_gain);
    f(std::string("lnf_bias"), self.lnf_bias);
    f(std::string("head_w"), self.head_w);
    f(std::string("head_b"), self.head_b);
    FusionParams::visit(self.fusion,
                        [&](const char* name, auto& m) { f("fusion." + std::string(name), m); });
  }
};

struct AuxiliaryInput {
  Vector query;  // fusion query: the image-side feature
  ObjectFeatureSet objects;
};

// One prefix token for v, and a second for the fused object feature u when
// auxiliary features are enabled.
struct PrefixInput {
  Vector v;
  std::optional<AuxiliaryInput> aux;

  std::size_t length() const noexcept { return aux ? 2 : 1; }
};

class DecoderModel {
 public:
  static DecoderModel init(const DecoderConfig& cfg, std::size_t vocab_size,
                           std::size_t embed_dim);

  const DecoderConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t embed_dim() const noexcept { return embed_dim_; }
  DecoderWeights& weights() noexcept { return weights_; }
  const DecoderWeights& weights() const noexcept { return weights_; }

  std::vector<std::pair<std::string, Matrix>> named_tensors() const;
  static DecoderModel from_tensors(const DecoderConfig& cfg, std::size_t vocab_size,
                                   std::size_t embed_dim,
                                   std::span<const std::pair<std::string, Matrix>> tensors);

 private:
  DecoderConfig config_;
  std::size_t vocab_size_ = 0;
  std::size_t embed_dim_ = 0;
  DecoderWeights weights_;
};

// Attention probabilities captured during a forward pass, [layer][head],
// each (P+L) x (P+L).
using AttentionMaps = std::vector<std::vector<Matrix>>;

// Logits for every position of [prefix..., BOS, w_1, ...]: (P + L) x V.
// `tokens` must start with BOS. Dropout is off.
Matrix forward(const DecoderModel& model, const PrefixInput& prefix,
               std::span<const TokenId> tokens, AttentionMaps* attention = nullptr);

// Mean cross-entropy of w_1 .. w_n, EOS given BOS w_1 .. w_n EOS. PAD
// targets are masked.
double reconstruction_loss(const DecoderModel& model, const PrefixInput& prefix,
                           std::span<const TokenId> tokens);

struct LossAndGrads {
  double loss = 0.0;
  DecoderWeights grads;
};

// Loss and parameter gradients for one caption. With dropout_seed set,
// dropout is active with the model's configured rate.
LossAndGrads reconstruction_loss_and_grads(const DecoderModel& model, const PrefixInput& prefix,
                                           std::span<const TokenId> tokens,
                                           std::optional<std::uint64_t> dropout_seed = std::nullopt);

struct TrainingExample {
  PrefixInput prefix;
  std::vector<TokenId> tokens;  // BOS .. EOS
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Adam over decoder and fusion parameters with shuffled mini-batches and
// teacher forcing. Deterministic in cfg.seed. Throws NumericalError if the
// loss goes non-finite.
TrainResult train(DecoderModel& model, std::span<const TrainingExample> data,
                  const EpochCallback& on_epoch = {});

struct DecodeStrategy {
  std::size_t beam_size = 1;  // 1 = greedy

  static DecodeStrategy greedy() { return {1}; }
  static DecodeStrategy beam(std::size_t k) { return {k}; }
};

// Token ids without BOS/EOS. PAD, BOS and UNK are never emitted; argmax ties
// go to the lowest id.
std::vector<TokenId> generate(const DecoderModel& model, const PrefixInput& prefix,
                              DecodeStrategy strategy = DecodeStrategy::greedy());

}  // namespace textcap
