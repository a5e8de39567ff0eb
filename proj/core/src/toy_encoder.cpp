// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/toy_encoder.hpp"

#include <string>

#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

namespace {

Vector expand(std::uint64_t state, std::size_t dim) {
  SplitMix64 stream(state);
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = stream.next_signed_unit();
  return v;
}

Vector normalized(const Vector& v, const char* what) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericalError(std::string(what) + ": zero-norm vector");
  }
  return v / norm;
}

}  // namespace

void ToyEncoderSpec::validate() const {
  if (dim < 2) throw ValidationError("toy encoder dim must be >= 2");
  if (!(gap_scale >= 0.0)) throw ValidationError("gap_scale must be >= 0");
  if (!(noise_scale >= 0.0)) throw ValidationError("noise_scale must be >= 0");
}

Vector toy_text_encode(std::span<const std::string> tokens, const ToyEncoderSpec& spec) {
  spec.validate();
  if (tokens.empty()) throw ValidationError("toy_text_encode: empty token list");
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(spec.dim));
  for (const auto& token : tokens) sum += expand(fnv1a64(token) ^ spec.seed, spec.dim);
  return normalized(sum, "toy_text_encode");
}

Vector toy_gap_direction(const ToyEncoderSpec& spec) {
  spec.validate();
  return normalized(expand(spec.seed ^ kGapDirectionSalt, spec.dim), "gap direction");
}

Vector toy_image_encode(std::span<const std::string> tokens, std::uint64_t item_index,
                        const ToyEncoderSpec& spec) {
  Vector v = toy_text_encode(tokens, spec);
  if (spec.gap_scale == 0.0 && spec.noise_scale == 0.0) return v;
  v += spec.gap_scale * toy_gap_direction(spec);
  if (spec.noise_scale > 0.0) {
    NormalStream noise(spec.seed ^ item_index);
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += spec.noise_scale * noise.next();
  }
  return normalized(v, "toy_image_encode");
}

EmbeddingMatrix toy_encode_texts(const std::vector<std::vector<std::string>>& token_lists,
                                 const ToyEncoderSpec& spec) {
  EmbeddingMatrix out(token_lists.size(), spec.dim);
  for (std::size_t i = 0; i < token_lists.size(); ++i) {
    const Vector v = toy_text_encode(token_lists[i], spec);
    out.set_row(i, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }
  return out;
}

EmbeddingMatrix toy_encode_images(const std::vector<std::vector<std::string>>& token_lists,
                                  const ToyEncoderSpec& spec, std::uint64_t index_offset) {
  EmbeddingMatrix out(token_lists.size(), spec.dim);
  for (std::size_t i = 0; i < token_lists.size(); ++i) {
    const Vector v = toy_image_encode(token_lists[i], index_offset + i, spec);
    out.set_row(i, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }
  return out;
}

}  // namespace textcap
