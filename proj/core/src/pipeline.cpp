// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/pipeline.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "textcap/embedding_store.hpp"
#include "textcap/errors.hpp"
#include "textcap/refinement.hpp"
#include "textcap/toy_encoder.hpp"
#include "textcap/toy_grammar.hpp"

namespace textcap {

namespace {

constexpr const char* kSupportTensor = "support.features";
constexpr const char* kCheckpointFormat = "textcap-checkpoint/1";

void require_path(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw ValidationError(std::string("config: ") + key + " is not set");
}

std::vector<CaptionRecord> toy_records(const PipelineConfig& cfg) {
  const ToyGrammar grammar = ToyGrammar::standard(cfg.toy.grammar_seed);
  return generate_toy_corpus(grammar, cfg.toy.n_train + cfg.toy.n_heldout);
}

void check_aligned(std::size_t records, const Matrix& m, const char* what) {
  if (static_cast<std::size_t>(m.rows()) != records) {
    throw ValidationError(std::string(what) + ": " + std::to_string(m.rows()) +
                          " embedding rows for " + std::to_string(records) + " corpus records");
  }
}

nlohmann::json decoder_config_json(const DecoderConfig& d) {
  return {{"layers", d.layers},         {"heads", d.heads},
          {"model_dim", d.model_dim},   {"ff_dim", d.ff_dim},
          {"max_len", d.max_len},       {"dropout", d.dropout},
          {"learning_rate", d.learning_rate}, {"epochs", d.epochs},
          {"batch_size", d.batch_size}, {"fusion_heads", d.fusion_heads},
          {"seed", d.seed}};
}

DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
  DecoderConfig d;
  d.layers = j.at("layers").get<std::size_t>();
  d.heads = j.at("heads").get<std::size_t>();
  d.model_dim = j.at("model_dim").get<std::size_t>();
  d.ff_dim = j.at("ff_dim").get<std::size_t>();
  d.max_len = j.at("max_len").get<std::size_t>();
  d.dropout = j.at("dropout").get<double>();
  d.learning_rate = j.at("learning_rate").get<double>();
  d.epochs = j.at("epochs").get<std::size_t>();
  d.batch_size = j.at("batch_size").get<std::size_t>();
  d.fusion_heads = j.at("fusion_heads").get<std::size_t>();
  d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

}  // namespace

TextEncoder make_object_encoder(const PipelineConfig& cfg) {
  if (cfg.toy.enabled) {
    const ToyEncoderSpec spec = cfg.toy.encoder;
    return [spec](std::span<const std::string> tokens) { return toy_text_encode(tokens, spec); };
  }
  if (cfg.paths.object_corpus.empty() || cfg.paths.object_embeddings.empty()) {
    return [](std::span<const std::string> tokens) -> Vector {
      throw ValidationError("object tag \"" + join_tokens(tokens) +
                            "\" cannot be encoded: paths.object_corpus/object_embeddings not set");
    };
  }
  const auto tags = read_corpus_file(cfg.paths.object_corpus);
  const Matrix emb = read_embeddings_file(cfg.paths.object_embeddings).to_matrix();
  check_aligned(tags.size(), emb, "object tag table");
  auto table = std::make_shared<std::unordered_map<std::string, Vector>>();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    (*table)[join_tokens(tags[i].tokens)] = emb.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return [table](std::span<const std::string> tokens) -> Vector {
    const auto key = join_tokens(tokens);
    const auto it = table->find(key);
    if (it == table->end()) throw ValidationError("object tag \"" + key + "\" not in tag table");
    return it->second;
  };
}

TrainingData load_training_data(const PipelineConfig& cfg) {
  TrainingData data;
  if (cfg.toy.enabled) {
    auto records = toy_records(cfg);
    records.resize(cfg.toy.n_train);
    const auto tokens = token_lists(records);
    data.text = toy_encode_texts(tokens, cfg.toy.encoder).to_matrix();
    data.pseudo_images = toy_encode_images(tokens, cfg.toy.encoder, 0).to_matrix();
    data.corpus = std::move(records);
    return data;
  }
  require_path(cfg.paths.train_corpus, "paths.train_corpus");
  require_path(cfg.paths.text_embeddings, "paths.text_embeddings");
  require_path(cfg.paths.image_embeddings, "paths.image_embeddings");
  data.corpus = read_corpus_file(cfg.paths.train_corpus);
  data.text = read_embeddings_file(cfg.paths.text_embeddings).to_matrix();
  data.pseudo_images = read_embeddings_file(cfg.paths.image_embeddings).to_matrix();
  check_aligned(data.corpus.size(), data.text, "text embeddings");
  check_aligned(data.corpus.size(), data.pseudo_images, "image embeddings");
  if (data.text.cols() != data.pseudo_images.cols()) {
    throw ValidationError("text and image embeddings differ in dimension");
  }
  return data;
}

InferenceData load_inference_data(const PipelineConfig& cfg) {
  InferenceData data;
  if (cfg.toy.enabled) {
    auto records = toy_records(cfg);
    records.erase(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(cfg.toy.n_train));
    data.images = toy_encode_images(token_lists(records), cfg.toy.encoder, cfg.toy.n_train).to_matrix();
    data.records = std::move(records);
    return data;
  }
  require_path(cfg.paths.inference_corpus, "paths.inference_corpus");
  require_path(cfg.paths.inference_images, "paths.inference_images");
  data.records = read_corpus_file(cfg.paths.inference_corpus);
  data.images = read_embeddings_file(cfg.paths.inference_images).to_matrix();
  check_aligned(data.records.size(), data.images, "inference images");
  return data;
}

PrefixInput make_prefix(const Eigen::Ref<const Vector>& feature, const Toggles& toggles,
                        const SupportSet* support, const TextEncoder& object_encoder,
                        const std::vector<std::string>& objects) {
  PrefixInput prefix;
  if (toggles.fp) {
    if (support == nullptr) throw ValidationError("feature projection enabled without a support set");
    prefix.v = project(feature, *support);
  } else {
    prefix.v = feature;
  }
  if (toggles.af) {
    prefix.aux = AuxiliaryInput{feature, encode_objects(objects, object_encoder,
                                                        static_cast<std::size_t>(feature.size()))};
  }
  return prefix;
}

std::string TrainingReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["n_train"] = n_train;
  j["vocab_size"] = vocab_size;
  j["refine"] = {{"epoch_mean_loss", refine_epoch_loss},
                 {"paired_cosine_before", paired_cosine_before},
                 {"paired_cosine_after", paired_cosine_after}};
  j["decoder"] = {{"epoch_mean_loss", decoder_epoch_loss}};
  return j.dump(2);
}

TrainedPipeline run_training(const PipelineConfig& cfg, const TrainingData& data) {
  cfg.validate();
  if (data.corpus.empty()) throw ValidationError("training corpus is empty");
  check_aligned(data.corpus.size(), data.text, "text embeddings");
  check_aligned(data.corpus.size(), data.pseudo_images, "image embeddings");
  if (data.text.cols() != data.pseudo_images.cols()) {
    throw ValidationError("text and image embeddings differ in dimension");
  }

  TrainedPipeline out{DecoderModel{}, Vocabulary{}, cfg.toggles, std::nullopt,
                      static_cast<std::size_t>(data.text.cols()), {}, {}};
  out.report.variant = cfg.toggles.name();
  out.report.n_train = data.corpus.size();

  Matrix features = data.pseudo_images;
  out.report.paired_cosine_before = mean_paired_cosine(features, data.text);
  if (cfg.toggles.fo) {
    RefineResult refined = refine_features(features, data.text, cfg.refine);
    features = std::move(refined.refined);
    out.report.refine_epoch_loss = std::move(refined.epoch_mean_loss);
  }
  out.report.paired_cosine_after = mean_paired_cosine(features, data.text);

  if (cfg.toggles.fp) out.support = build_support_set(data.text, cfg.tau_proj, cfg.top_k);

  out.vocab = Vocabulary::build(data.corpus, cfg.min_freq);
  out.report.vocab_size = out.vocab.size();
  const TextEncoder encoder = cfg.toggles.af ? make_object_encoder(cfg) : TextEncoder{};

  out.examples.reserve(data.corpus.size());
  for (std::size_t i = 0; i < data.corpus.size(); ++i) {
    const auto& rec = data.corpus[i];
    TrainingExample ex;
    ex.prefix = make_prefix(features.row(static_cast<Eigen::Index>(i)).transpose(), cfg.toggles,
                            out.support ? &*out.support : nullptr, encoder, rec.objects);
    // Keep prefix + BOS + words within max_len; EOS is a target only.
    const std::size_t room = cfg.decoder.max_len - ex.prefix.length() - 1;
    const std::span<const std::string> words(rec.tokens.data(), std::min(room, rec.tokens.size()));
    if (words.empty()) throw ValidationError("caption \"" + rec.id + "\" has no tokens");
    ex.tokens = out.vocab.encode_caption(words);
    out.examples.push_back(std::move(ex));
  }

  out.model = DecoderModel::init(cfg.decoder, out.vocab.size(), out.embed_dim);
  out.report.decoder_epoch_loss = train(out.model, out.examples).epoch_mean_loss;
  return out;
}

Checkpoint to_checkpoint(const PipelineConfig& cfg, const TrainedPipeline& trained) {
  nlohmann::json meta;
  meta["format"] = kCheckpointFormat;
  meta["config"] = nlohmann::json::parse(config_to_json(cfg));
  meta["decoder"] = decoder_config_json(trained.model.config());
  meta["embed_dim"] = trained.embed_dim;
  meta["vocab"] = trained.vocab.tokens();
  meta["toggles"] = {{"fo", trained.toggles.fo}, {"fp", trained.toggles.fp}, {"af", trained.toggles.af}};
  if (trained.support) {
    meta["support"] = {{"temperature", trained.support->temperature()},
                       {"top_k", trained.support->top_k() ? nlohmann::json(*trained.support->top_k())
                                                          : nlohmann::json("all")}};
  }
  Checkpoint ckpt;
  ckpt.metadata_json = meta.dump();
  for (auto& [name, m] : trained.model.named_tensors()) ckpt.tensors.emplace_back("model." + name, m);
  if (trained.support) ckpt.tensors.emplace_back(kSupportTensor, trained.support->features());
  return ckpt;
}

TrainedPipeline from_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint metadata: ") + e.what());
  }
  try {
    if (meta.at("format") != kCheckpointFormat) throw ValidationError("checkpoint: unknown format");
    TrainedPipeline out{DecoderModel{}, Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>()),
                        Toggles{meta.at("toggles").at("fo").get<bool>(), meta.at("toggles").at("fp").get<bool>(),
                                meta.at("toggles").at("af").get<bool>()},
                        std::nullopt, meta.at("embed_dim").get<std::size_t>(), {}, {}};
    std::vector<std::pair<std::string, Matrix>> model_tensors;
    for (const auto& [name, m] : ckpt.tensors) {
      if (name.rfind("model.", 0) == 0) model_tensors.emplace_back(name.substr(6), m);
    }
    out.model = DecoderModel::from_tensors(decoder_config_from_json(meta.at("decoder")), out.vocab.size(),
                                           out.embed_dim, model_tensors);
    if (const Matrix* support = ckpt.find(kSupportTensor)) {
      const auto& s = meta.at("support");
      std::optional<std::size_t> top_k;
      if (s.at("top_k").is_number()) top_k = s.at("top_k").get<std::size_t>();
      out.support = build_support_set(*support, s.at("temperature").get<double>(), top_k);
    }
    out.report.variant = out.toggles.name();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint metadata: ") + e.what());
  }
}

std::vector<GeneratedCaption> run_inference(const PipelineConfig& cfg, const TrainedPipeline& trained,
                                            const InferenceData& data) {
  check_aligned(data.records.size(), data.images, "inference images");
  if (data.records.empty()) return {};
  if (static_cast<std::size_t>(data.images.cols()) != trained.embed_dim) {
    throw ValidationError("inference images have dim " + std::to_string(data.images.cols()) +
                          ", checkpoint expects " + std::to_string(trained.embed_dim));
  }
  std::optional<SupportSet> override_support;
  if (!cfg.paths.support.empty()) {
    override_support = build_support_set(read_embeddings_file(cfg.paths.support).to_matrix(),
                                         cfg.tau_proj, cfg.top_k);
  }
  const SupportSet* support = override_support ? &*override_support
                              : trained.support ? &*trained.support
                                                : nullptr;
  if (trained.toggles.fp && support == nullptr) {
    throw ValidationError("feature projection enabled but no support set available");
  }
  if (support && support->dim() != trained.embed_dim) {
    throw ValidationError("support set dim does not match the checkpoint");
  }
  const TextEncoder encoder = trained.toggles.af ? make_object_encoder(cfg) : TextEncoder{};

  std::vector<GeneratedCaption> out;
  out.reserve(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    const PrefixInput prefix = make_prefix(data.images.row(static_cast<Eigen::Index>(i)).transpose(),
                                           trained.toggles, support, encoder, rec.objects);
    const auto ids = generate(trained.model, prefix, DecodeStrategy::beam(cfg.beam_size));
    GeneratedCaption cap;
    cap.id = rec.id;
    cap.tokens = trained.vocab.decode(ids);
    cap.caption = join_tokens(cap.tokens);
    out.push_back(std::move(cap));
  }
  return out;
}

void write_captions(const std::vector<GeneratedCaption>& captions, std::ostream& sink) {
  for (const auto& c : captions) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["caption"] = c.caption;
    sink << j.dump() << '\n';
  }
  if (!sink) throw IoError("caption write failed");
}

std::vector<EvalPair> make_eval_pairs(const std::vector<GeneratedCaption>& captions,
                                      const InferenceData& data) {
  if (captions.size() != data.records.size()) throw ValidationError("caption/reference count mismatch");
  std::vector<EvalPair> pairs;
  pairs.reserve(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    pairs.push_back({captions[i].tokens, {data.records[i].tokens}});
  }
  return pairs;
}

double object_hit_rate(const std::vector<GeneratedCaption>& captions, const InferenceData& data) {
  if (captions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto& toks = captions[i].tokens;
    for (const auto& obj : data.records[i].objects) {
      if (std::find(toks.begin(), toks.end(), obj) != toks.end()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(captions.size());
}

const VariantResult& AblationReport::find(const Toggles& t) const {
  for (const auto& v : variants) {
    if (v.toggles == t) return v;
  }
  throw ValidationError("ablation report has no variant " + t.name());
}

std::string AblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_train"] = n_train;
  j["n_eval"] = n_eval;
  j["variants"] = nlohmann::ordered_json::array();
  for (const auto& v : variants) {
    nlohmann::ordered_json e;
    e["name"] = v.toggles.name();
    e["fo"] = v.toggles.fo;
    e["fp"] = v.toggles.fp;
    e["af"] = v.toggles.af;
    e["bleu4"] = v.scores.bleu4;
    e["rouge_l"] = v.scores.rouge_l;
    e["cider_d"] = v.scores.cider_d;
    e["object_hit_rate"] = v.object_hit_rate;
    e["final_train_loss"] = v.final_train_loss;
    j["variants"].push_back(std::move(e));
  }
  return j.dump(2);
}

AblationReport run_ablation(const PipelineConfig& cfg, const ProgressCallback& progress) {
  const TrainingData train_data = load_training_data(cfg);
  const InferenceData eval_data = load_inference_data(cfg);
  AblationReport report;
  report.n_train = train_data.corpus.size();
  report.n_eval = eval_data.records.size();
  for (const Toggles& t : Toggles::all_variants()) {
    PipelineConfig variant = cfg;
    variant.toggles = t;
    const TrainedPipeline trained = run_training(variant, train_data);
    const auto captions = run_inference(variant, trained, eval_data);
    VariantResult r;
    r.toggles = t;
    r.scores = evaluate(make_eval_pairs(captions, eval_data));
    r.object_hit_rate = object_hit_rate(captions, eval_data);
    r.final_train_loss = trained.report.decoder_epoch_loss.empty() ? 0.0 : trained.report.decoder_epoch_loss.back();
    if (progress) {
      progress(t.name() + ": bleu4=" + std::to_string(r.scores.bleu4) + " rouge_l=" +
               std::to_string(r.scores.rouge_l) + " cider_d=" + std::to_string(r.scores.cider_d) +
               " object_hit=" + std::to_string(r.object_hit_rate));
    }
    report.variants.push_back(std::move(r));
  }
  return report;
}

std::vector<EvalPair> read_eval_pairs(std::istream& candidates, std::istream& references) {
  std::map<std::string, std::vector<std::vector<std::string>>> refs;
  std::string line;
  std::size_t line_no = 0;
  const auto parse = [&](const std::string& text) {
    try {
      auto j = nlohmann::json::parse(text);
      if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
        throw ParseError(line_no, "expected an object with string \"id\"");
      }
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
  };
  while (std::getline(references, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = parse(line);
    auto& bucket = refs[j["id"].get<std::string>()];
    if (j.contains("references")) {
      for (const auto& r : j["references"]) bucket.push_back(tokenize(r.get<std::string>()));
    } else if (j.contains("text")) {
      bucket.push_back(tokenize(j["text"].get<std::string>()));
    } else {
      throw ParseError(line_no, "reference line needs \"text\" or \"references\"");
    }
  }
  std::vector<EvalPair> pairs;
  line_no = 0;
  while (std::getline(candidates, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = parse(line);
    const auto id = j["id"].get<std::string>();
    const auto it = refs.find(id);
    if (it == refs.end()) throw ParseError(line_no, "no references for id \"" + id + "\"");
    const std::string caption = j.contains("caption") ? j["caption"].get<std::string>()
                                                      : j.value("text", std::string());
    pairs.push_back({tokenize(caption), it->second});
  }
  return pairs;
}

std::string score_report_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["bleu4"] = r.bleu4;
  j["rouge_l"] = r.rouge_l;
  j["cider_d"] = r.cider_d;
  j["n_pairs"] = r.n_pairs;
  return j.dump(2);
}

void run_training_to_files(const PipelineConfig& cfg) {
  require_path(cfg.paths.checkpoint, "paths.checkpoint");
  const TrainingData data = load_training_data(cfg);
  const TrainedPipeline trained = run_training(cfg, data);
  write_checkpoint_file(to_checkpoint(cfg, trained), cfg.paths.checkpoint);
  if (!cfg.paths.report.empty()) {
    std::ofstream out(cfg.paths.report, std::ios::trunc);
    if (!out) throw IoError("cannot open " + cfg.paths.report.string());
    out << trained.report.to_json() << '\n';
  }
}

void run_inference_to_files(const PipelineConfig& cfg) {
  require_path(cfg.paths.checkpoint, "paths.checkpoint");
  require_path(cfg.paths.captions, "paths.captions");
  const TrainedPipeline trained = from_checkpoint(read_checkpoint_file(cfg.paths.checkpoint));
  const InferenceData data = load_inference_data(cfg);
  const auto captions = run_inference(cfg, trained, data);
  std::ofstream out(cfg.paths.captions, std::ios::trunc);
  if (!out) throw IoError("cannot open " + cfg.paths.captions.string());
  write_captions(captions, out);
}

}  // namespace textcap
