// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "textcap/embedding_store.hpp"
#include "textcap/tensor.hpp"

namespace textcap {

// Deterministic stand-ins for a contrastive text/image encoder pair. The
// image side is the text vector pushed along a fixed "gap" direction plus
// per-item Gaussian noise, which reproduces a modality gap of controllable
// size without running any network.
struct ToyEncoderSpec {
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  double gap_scale = 0.5;
  double noise_scale = 0.1;

  void validate() const;
};

inline constexpr std::uint64_t kGapDirectionSalt = 0x6761705F;  // "gap_"

// FNV-1a-64(token) ^ seed, expanded through splitmix64, summed, normalized.
Vector toy_text_encode(std::span<const std::string> tokens, const ToyEncoderSpec& spec);

Vector toy_image_encode(std::span<const std::string> tokens, std::uint64_t item_index,
                        const ToyEncoderSpec& spec);

// Unit vector shared by every image embedding for a given seed.
Vector toy_gap_direction(const ToyEncoderSpec& spec);

// Row-wise encoders over a tokenized corpus. Image row i uses
// item_index = index_offset + i.
EmbeddingMatrix toy_encode_texts(const std::vector<std::vector<std::string>>& token_lists,
                                 const ToyEncoderSpec& spec);
EmbeddingMatrix toy_encode_images(const std::vector<std::vector<std::string>>& token_lists,
                                  const ToyEncoderSpec& spec, std::uint64_t index_offset = 0);

}  // namespace textcap
