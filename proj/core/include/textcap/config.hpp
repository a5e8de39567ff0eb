// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textcap/decoder.hpp"
#include "textcap/refinement.hpp"
#include "textcap/toy_encoder.hpp"

namespace textcap {

// Which of the three training-time components are active.
struct Toggles {
  bool fo = true;  // contrastive refinement of pseudo image features
  bool fp = true;  // projection onto the text support set
  bool af = true;  // fused object-tag prefix

  // "Baseline", "+FO", "+FP", "+AF", "+FO&AF", "+FP&FO", "+FP&AF", "Full"
  std::string name() const;
  static std::vector<Toggles> all_variants();
  bool operator==(const Toggles&) const = default;
};

struct PipelinePaths {
  std::filesystem::path train_corpus;        // JSONL
  std::filesystem::path text_embeddings;     // SYNE, aligned with train_corpus
  std::filesystem::path image_embeddings;    // SYNE pseudo image features
  std::filesystem::path inference_corpus;    // JSONL: ids, object tags, optional reference text
  std::filesystem::path inference_images;    // SYNE, aligned with inference_corpus
  std::filesystem::path support;             // optional SYNE overriding the checkpoint support set
  std::filesystem::path object_corpus;       // JSONL tag table, one tag per line (real data + af)
  std::filesystem::path object_embeddings;   // SYNE, aligned with object_corpus
  std::filesystem::path checkpoint;
  std::filesystem::path report;
  std::filesystem::path captions;
};

struct ToyConfig {
  bool enabled = false;
  std::size_t n_train = 500;
  std::size_t n_heldout = 100;
  ToyEncoderSpec encoder{64, 7, 0.5, 0.1};
  std::uint64_t grammar_seed = 1;
};

struct PipelineConfig {
  PipelineConfig() { derive_seeds(); }

  PipelinePaths paths;
  Toggles toggles;
  double tau_proj = 0.01;
  std::optional<std::size_t> top_k;
  RefineConfig refine;
  DecoderConfig decoder;
  ToyConfig toy;
  std::size_t min_freq = 5;  // toy preset uses 1
  std::size_t beam_size = 1;
  std::uint64_t seed = 0;

  // Sub-seeds for refinement shuffling and decoder init/shuffle/dropout,
  // derived from `seed`. Called after every change to `seed`.
  void derive_seeds();
  void validate() const;
};

// Config files are "key = value" lines; '#' starts a comment. Keys are listed
// by config_keys(); unknown keys and unparsable values are ValidationErrors.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);
void apply_config_text(PipelineConfig& cfg, std::string_view text);
PipelineConfig load_config_file(const std::filesystem::path& path);
std::vector<std::string> config_keys();

// Sorted-key JSON echo of every config field.
std::string config_to_json(const PipelineConfig& cfg);

// The configuration the toy end-to-end benchmark runs with.
PipelineConfig toy_benchmark_config();

}  // namespace textcap
