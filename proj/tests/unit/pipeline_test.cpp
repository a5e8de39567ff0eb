// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "textcap/checkpoint.hpp"
#include "textcap/embedding_store.hpp"
#include "textcap/errors.hpp"
#include "textcap/pipeline.hpp"
#include "textcap/toy_encoder.hpp"
#include "textcap_test_support.hpp"

namespace textcap {
namespace {

PipelineConfig small_config(Toggles toggles = {}) {
  PipelineConfig c;
  c.toy.enabled = true;
  c.toy.n_train = 40;
  c.toy.n_heldout = 8;
  c.toy.encoder = {16, 7, 0.5, 0.1};
  c.min_freq = 1;
  c.tau_proj = 0.05;
  c.refine.learning_rate = 1e-3;
  c.refine.epochs = 2;
  c.refine.batch_size = 16;
  c.decoder.layers = 1;
  c.decoder.heads = 2;
  c.decoder.model_dim = 16;
  c.decoder.ff_dim = 32;
  c.decoder.max_len = 10;
  c.decoder.epochs = 2;
  c.decoder.batch_size = 8;
  c.decoder.learning_rate = 1e-3;
  c.decoder.fusion_heads = 2;
  c.seed = 5;
  c.derive_seeds();
  c.toggles = toggles;
  return c;
}

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(ckpt, out);
  return out.str();
}

TEST(PipelineWiring, BaselineFeedsRawPseudoFeatures) {
  const PipelineConfig cfg = small_config({false, false, false});
  const TrainingData data = load_training_data(cfg);
  const TrainedPipeline t = run_training(cfg, data);
  EXPECT_EQ(t.report.variant, "Baseline");
  EXPECT_FALSE(t.support.has_value());
  ASSERT_EQ(t.examples.size(), 40u);
  for (std::size_t i = 0; i < t.examples.size(); ++i) {
    EXPECT_EQ(t.examples[i].prefix.v, data.pseudo_images.row(static_cast<Eigen::Index>(i)).transpose());
    EXPECT_FALSE(t.examples[i].prefix.aux.has_value());
  }
  EXPECT_TRUE(t.report.refine_epoch_loss.empty());
  EXPECT_EQ(t.report.paired_cosine_before, t.report.paired_cosine_after);
}

TEST(PipelineWiring, RefinementIncreasesPairedCosine) {
  const PipelineConfig cfg = small_config({true, false, false});
  const TrainedPipeline t = run_training(cfg, load_training_data(cfg));
  EXPECT_GT(t.report.paired_cosine_after, t.report.paired_cosine_before);
  EXPECT_EQ(t.report.refine_epoch_loss.size(), 2u);
}

TEST(PipelineWiring, ProjectionUsesTextSupportSet) {
  const PipelineConfig cfg = small_config({false, true, false});
  const TrainingData data = load_training_data(cfg);
  const TrainedPipeline t = run_training(cfg, data);
  ASSERT_TRUE(t.support.has_value());
  EXPECT_EQ(t.support->features(), data.text);
  EXPECT_DOUBLE_EQ(t.support->temperature(), 0.05);
  for (std::size_t i = 0; i < 5; ++i) {
    const Vector raw = data.pseudo_images.row(static_cast<Eigen::Index>(i)).transpose();
    EXPECT_EQ(t.examples[i].prefix.v, project(raw, *t.support));
  }
}

TEST(PipelineWiring, AuxiliaryFeatureUsesObjectTags) {
  const PipelineConfig cfg = small_config({false, false, true});
  const TrainingData data = load_training_data(cfg);
  const TrainedPipeline t = run_training(cfg, data);
  const auto& ex = t.examples[3];
  ASSERT_TRUE(ex.prefix.aux.has_value());
  EXPECT_EQ(ex.prefix.aux->query, data.pseudo_images.row(3).transpose());
  ASSERT_EQ(ex.prefix.aux->objects.size(), data.corpus[3].objects.size());
  EXPECT_EQ(ex.prefix.aux->objects.features.row(0).transpose(),
            toy_text_encode(tokenize(data.corpus[3].objects[0]), cfg.toy.encoder));
}

TEST(PipelineWiring, TrainingAndInferenceShareOnePrefixFunction) {
  // Equal features give equal prefixes whether they came from training or
  // inference; run_inference and run_training both call make_prefix.
  const PipelineConfig cfg = small_config({false, true, true});
  const TrainingData data = load_training_data(cfg);
  const TrainedPipeline t = run_training(cfg, data);
  const TextEncoder enc = make_object_encoder(cfg);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = testing::random_vector(16, rng);
    const PrefixInput a = make_prefix(x, t.toggles, &*t.support, enc, {"dog"});
    const PrefixInput b = make_prefix(x, t.toggles, &*t.support, enc, {"dog"});
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.aux->objects.features, b.aux->objects.features);
  }
  const Vector row0 = data.pseudo_images.row(0).transpose();
  const PrefixInput p = make_prefix(row0, t.toggles, &*t.support, enc, data.corpus[0].objects);
  EXPECT_EQ(p.v, t.examples[0].prefix.v);
  EXPECT_EQ(p.aux->objects.features, t.examples[0].prefix.aux->objects.features);
}

TEST(PipelineDeterminism, RerunGivesIdenticalCheckpointAndCaptions) {
  const PipelineConfig cfg = small_config();
  const TrainingData data = load_training_data(cfg);
  const InferenceData eval = load_inference_data(cfg);
  const TrainedPipeline a = run_training(cfg, data);
  const TrainedPipeline b = run_training(cfg, data);
  EXPECT_EQ(checkpoint_bytes(to_checkpoint(cfg, a)), checkpoint_bytes(to_checkpoint(cfg, b)));
  const auto ca = run_inference(cfg, a, eval);
  const auto cb = run_inference(cfg, b, eval);
  ASSERT_EQ(ca.size(), 8u);
  for (std::size_t i = 0; i < ca.size(); ++i) EXPECT_EQ(ca[i].caption, cb[i].caption);
}

TEST(PipelineDeterminism, CheckpointRestoresSamePipeline) {
  const PipelineConfig cfg = small_config();
  const TrainedPipeline a = run_training(cfg, load_training_data(cfg));
  const Checkpoint ckpt = to_checkpoint(cfg, a);
  const TrainedPipeline back = from_checkpoint(ckpt);
  EXPECT_EQ(back.toggles, a.toggles);
  EXPECT_EQ(back.vocab, a.vocab);
  EXPECT_EQ(back.embed_dim, 16u);
  EXPECT_EQ(checkpoint_bytes(to_checkpoint(cfg, back)), checkpoint_bytes(ckpt));
  const InferenceData eval = load_inference_data(cfg);
  const auto ca = run_inference(cfg, a, eval);
  const auto cb = run_inference(cfg, back, eval);
  for (std::size_t i = 0; i < ca.size(); ++i) EXPECT_EQ(ca[i].caption, cb[i].caption);
}

TEST(PipelineErrors, MisalignedOrMismatchedInputs) {
  const PipelineConfig cfg = small_config();
  TrainingData data = load_training_data(cfg);
  TrainingData short_text = data;
  short_text.text.conservativeResize(39, Eigen::NoChange);
  EXPECT_THROW(run_training(cfg, short_text), ValidationError);
  TrainingData narrow = data;
  narrow.pseudo_images.conservativeResize(Eigen::NoChange, 15);
  EXPECT_THROW(run_training(cfg, narrow), ValidationError);

  const TrainedPipeline t = run_training(cfg, data);
  InferenceData eval = load_inference_data(cfg);
  InferenceData wrong_dim = eval;
  wrong_dim.images = Matrix::Ones(eval.images.rows(), 8);
  EXPECT_THROW(run_inference(cfg, t, wrong_dim), ValidationError);
  InferenceData misaligned = eval;
  misaligned.records.pop_back();
  EXPECT_THROW(run_inference(cfg, t, misaligned), ValidationError);

  TrainedPipeline no_support = from_checkpoint(to_checkpoint(cfg, t));
  no_support.support.reset();
  EXPECT_THROW(run_inference(cfg, no_support, eval), ValidationError);
}

TEST(PipelineErrors, SupportOverrideDimensionChecked) {
  const testing::TempDir dir("support");
  PipelineConfig cfg = small_config({false, true, false});
  const TrainedPipeline t = run_training(cfg, load_training_data(cfg));
  write_embeddings_file(EmbeddingMatrix::from_matrix(Matrix::Ones(3, 8)), dir / "s.syne");
  cfg.paths.support = dir / "s.syne";
  EXPECT_THROW(run_inference(cfg, t, load_inference_data(cfg)), ValidationError);
}

TEST(PipelineInference, EmptyObjectListStillCaptions) {
  const PipelineConfig cfg = small_config();
  const TrainedPipeline t = run_training(cfg, load_training_data(cfg));
  InferenceData eval = load_inference_data(cfg);
  for (auto& r : eval.records) r.objects.clear();
  const auto caps = run_inference(cfg, t, eval);
  ASSERT_EQ(caps.size(), eval.records.size());
  for (const auto& c : caps) EXPECT_EQ(c.caption, join_tokens(c.tokens));
}

TEST(PipelineInference, CaptionsJsonl) {
  std::vector<GeneratedCaption> caps{{"a", {"a", "dog"}, "a dog"}, {"b", {}, ""}};
  std::ostringstream out;
  write_captions(caps, out);
  EXPECT_EQ(out.str(), "{\"id\":\"a\",\"caption\":\"a dog\"}\n{\"id\":\"b\",\"caption\":\"\"}\n");
}

TEST(PipelineFiles, LoadsCorpusAndEmbeddingsFromDisk) {
  const testing::TempDir dir("files");
  const std::vector<CaptionRecord> corpus{CaptionRecord::make("1", "a red dog", {"dog"}),
                                          CaptionRecord::make("2", "a blue cat", {"cat"})};
  {
    std::ofstream out(dir / "c.jsonl");
    write_corpus(corpus, out);
  }
  std::mt19937_64 rng(3);
  write_embeddings_file(EmbeddingMatrix::from_matrix(testing::random_matrix(2, 4, rng)), dir / "t.syne");
  write_embeddings_file(EmbeddingMatrix::from_matrix(testing::random_matrix(2, 4, rng)), dir / "i.syne");
  write_embeddings_file(EmbeddingMatrix::from_matrix(testing::random_matrix(3, 4, rng)), dir / "bad.syne");
  PipelineConfig cfg;
  cfg.paths.train_corpus = dir / "c.jsonl";
  cfg.paths.text_embeddings = dir / "t.syne";
  cfg.paths.image_embeddings = dir / "i.syne";
  const TrainingData data = load_training_data(cfg);
  EXPECT_EQ(data.corpus, corpus);
  EXPECT_EQ(data.text.rows(), 2);
  cfg.paths.image_embeddings = dir / "bad.syne";
  EXPECT_THROW(load_training_data(cfg), ValidationError);
  cfg.paths.image_embeddings.clear();
  EXPECT_THROW(load_training_data(cfg), ValidationError);
}

TEST(PipelineFiles, ObjectTagTableLookup) {
  const testing::TempDir dir("tags");
  {
    std::ofstream out(dir / "tags.jsonl");
    const std::vector<CaptionRecord> tags{CaptionRecord::make("0", "dog"), CaptionRecord::make("1", "traffic light")};
    write_corpus(tags, out);
  }
  Matrix emb(2, 3);
  emb << 1, 0, 0, 0, 1, 0;
  write_embeddings_file(EmbeddingMatrix::from_matrix(emb), dir / "tags.syne");
  PipelineConfig cfg;
  const std::vector<std::string> dog{"dog"};
  EXPECT_THROW(make_object_encoder(cfg)(dog), ValidationError);
  cfg.paths.object_corpus = dir / "tags.jsonl";
  cfg.paths.object_embeddings = dir / "tags.syne";
  const TextEncoder enc = make_object_encoder(cfg);
  EXPECT_EQ(enc(dog), emb.row(0).transpose());
  EXPECT_EQ(enc(std::vector<std::string>{"traffic", "light"}), emb.row(1).transpose());
  EXPECT_THROW(enc(std::vector<std::string>{"zebra"}), ValidationError);
}

TEST(PipelineEval, ReadsBothReferenceLayouts) {
  std::istringstream cands("{\"id\":\"a\",\"caption\":\"a dog runs\"}\n{\"id\":\"b\",\"text\":\"a cat\"}\n");
  std::istringstream refs(
      "{\"id\":\"a\",\"text\":\"a dog runs\"}\n{\"id\":\"a\",\"text\":\"the dog is running\"}\n"
      "{\"id\":\"b\",\"references\":[\"a cat sleeps\",\"one cat\"]}\n");
  const auto pairs = read_eval_pairs(cands, refs);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].references.size(), 2u);
  EXPECT_EQ(pairs[1].references.size(), 2u);
  EXPECT_EQ(pairs[1].candidate, (std::vector<std::string>{"a", "cat"}));
  std::istringstream orphan("{\"id\":\"z\",\"caption\":\"x\"}\n");
  std::istringstream refs2("{\"id\":\"a\",\"text\":\"x\"}\n");
  EXPECT_THROW(read_eval_pairs(orphan, refs2), ParseError);
  const auto j = nlohmann::json::parse(score_report_json(ScoreReport{0.5, 0.25, 1.5, 2}));
  EXPECT_EQ(j.at("n_pairs").get<int>(), 2);
  EXPECT_DOUBLE_EQ(j.at("cider_d").get<double>(), 1.5);
}

TEST(PipelineAblation, ReportsEightVariants) {
  PipelineConfig cfg = small_config();
  cfg.decoder.epochs = 1;
  std::vector<std::string> messages;
  const AblationReport r = run_ablation(cfg, [&](const std::string& m) { messages.push_back(m); });
  ASSERT_EQ(r.variants.size(), 8u);
  EXPECT_EQ(messages.size(), 8u);
  EXPECT_EQ(r.n_train, 40u);
  EXPECT_EQ(r.n_eval, 8u);
  for (const Toggles& t : Toggles::all_variants()) EXPECT_EQ(r.find(t).toggles, t);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.at("variants").size(), 8u);
}

}  // namespace
}  // namespace textcap
