// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "textcap/checkpoint.hpp"
#include "textcap/config.hpp"
#include "textcap/corpus.hpp"
#include "textcap/decoder.hpp"
#include "textcap/fusion.hpp"
#include "textcap/metrics.hpp"
#include "textcap/projection.hpp"

namespace textcap {

struct TrainingData {
  std::vector<CaptionRecord> corpus;
  Matrix text;           // n x d
  Matrix pseudo_images;  // n x d
};

struct InferenceData {
  std::vector<CaptionRecord> records;  // ids, object tags, reference text (may be empty)
  Matrix images;                       // m x d
};

// Maps tag text to its embedding: toy encoder in toy mode, otherwise a
// lookup into the object tag table.
TextEncoder make_object_encoder(const PipelineConfig& cfg);

// Toy mode generates everything from the grammar and toy encoders;
// otherwise the configured files are read and row alignment is checked.
TrainingData load_training_data(const PipelineConfig& cfg);
InferenceData load_inference_data(const PipelineConfig& cfg);

// The one transformation from an image-side feature to a decoder prefix.
// Training (refined pseudo features) and inference (real image features)
// both go through here.
PrefixInput make_prefix(const Eigen::Ref<const Vector>& feature, const Toggles& toggles,
                        const SupportSet* support, const TextEncoder& object_encoder,
                        const std::vector<std::string>& objects);

struct TrainingReport {
  std::string variant;
  std::vector<double> refine_epoch_loss;
  double paired_cosine_before = 0.0;
  double paired_cosine_after = 0.0;
  std::vector<double> decoder_epoch_loss;
  std::size_t n_train = 0;
  std::size_t vocab_size = 0;

  std::string to_json() const;
};

struct TrainedPipeline {
  DecoderModel model;
  Vocabulary vocab;
  Toggles toggles;
  std::optional<SupportSet> support;
  std::size_t embed_dim = 0;
  TrainingReport report;
  // Decoder inputs in row order (exposed for wiring checks).
  std::vector<TrainingExample> examples;
};

TrainedPipeline run_training(const PipelineConfig& cfg, const TrainingData& data);

Checkpoint to_checkpoint(const PipelineConfig& cfg, const TrainedPipeline& trained);
TrainedPipeline from_checkpoint(const Checkpoint& ckpt);

struct GeneratedCaption {
  std::string id;
  std::vector<std::string> tokens;
  std::string caption;
};

// No feature refinement here: real image features go straight to
// make_prefix. cfg.paths.support, when set, replaces the stored support set.
std::vector<GeneratedCaption> run_inference(const PipelineConfig& cfg, const TrainedPipeline& trained,
                                            const InferenceData& data);

void write_captions(const std::vector<GeneratedCaption>& captions, std::ostream& sink);

// Candidates paired with references by row (inference records' text).
std::vector<EvalPair> make_eval_pairs(const std::vector<GeneratedCaption>& captions,
                                      const InferenceData& data);

// Fraction of items whose caption contains one of the item's object tags.
double object_hit_rate(const std::vector<GeneratedCaption>& captions, const InferenceData& data);

struct VariantResult {
  Toggles toggles;
  ScoreReport scores;
  double object_hit_rate = 0.0;
  double final_train_loss = 0.0;
};

struct AblationReport {
  std::vector<VariantResult> variants;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;

  const VariantResult& find(const Toggles& t) const;
  std::string to_json() const;
};

using ProgressCallback = std::function<void(const std::string& message)>;

// Trains and evaluates all eight toggle combinations on shared data.
AblationReport run_ablation(const PipelineConfig& cfg, const ProgressCallback& progress = {});

// Candidates JSONL {"id", "caption"} joined by id with references JSONL,
// where each line is {"id", "text"} (repeatable per id) or
// {"id", "references": [...]}.
std::vector<EvalPair> read_eval_pairs(std::istream& candidates, std::istream& references);
std::string score_report_json(const ScoreReport& report);

// File-driven wrappers used by the CLI.
void run_training_to_files(const PipelineConfig& cfg);
void run_inference_to_files(const PipelineConfig& cfg);

}  // namespace textcap
