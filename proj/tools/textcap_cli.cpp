// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// textcap: command-line front end for the captioning pipeline.
//
// Exit codes: 0 success, 1 I/O or internal failure, 2 validation error
// (bad flags, config, or input files), 3 numerical failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "textcap/config.hpp"
#include "textcap/corpus.hpp"
#include "textcap/embedding_store.hpp"
#include "textcap/errors.hpp"
#include "textcap/pipeline.hpp"
#include "textcap/projection.hpp"
#include "textcap/refinement.hpp"
#include "textcap/toy_encoder.hpp"
#include "textcap/toy_grammar.hpp"

namespace {

using namespace textcap;

constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

// --config / --set / --preset, shared by every config-driven subcommand.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string preset = "default";

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--set", overrides, "override a config key (key=value), repeatable");
    app->add_option("--preset", preset, "base configuration before --config/--set")
        ->check(CLI::IsMember({"default", "toy"}));
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = preset == "toy" ? toy_benchmark_config() : PipelineConfig{};
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config " + config_path);
      std::stringstream text;
      text << in.rdbuf();
      apply_config_text(cfg, text.str());
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got \"" + kv + "\"");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  auto out = open_out(path);
  out << text << '\n';
}

ToyEncoderSpec toy_spec_from(const ConfigFlags& flags) { return flags.resolve().toy.encoder; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textcap: text-only image captioning in embedding space"};
  app.require_subcommand(1);

  // gen-toy
  std::string toy_out;
  std::optional<std::size_t> toy_n;
  ConfigFlags toy_flags;
  auto* gen_toy = app.add_subcommand("gen-toy", "write a toy caption corpus (JSONL)");
  gen_toy->add_option("--out", toy_out, "corpus JSONL")->required();
  gen_toy->add_option("--n", toy_n, "records (default toy.n_train + toy.n_heldout)");
  toy_flags.attach(gen_toy);

  // encode-toy
  std::string enc_corpus, enc_text_out, enc_image_out;
  std::uint64_t enc_offset = 0;
  ConfigFlags enc_flags;
  auto* encode_toy = app.add_subcommand("encode-toy", "toy text/image embeddings for a corpus");
  encode_toy->add_option("--corpus", enc_corpus, "corpus JSONL")->required()->check(CLI::ExistingFile);
  encode_toy->add_option("--text-out", enc_text_out, "text SYNE output");
  encode_toy->add_option("--image-out", enc_image_out, "image SYNE output");
  encode_toy->add_option("--index-offset", enc_offset, "item index of the first row (noise stream)");
  enc_flags.attach(encode_toy);

  // refine
  std::string ref_image, ref_text, ref_out, ref_loss;
  ConfigFlags ref_flags;
  auto* refine = app.add_subcommand("refine", "contrastively refine pseudo image features");
  refine->add_option("--image", ref_image, "pseudo image SYNE")->required()->check(CLI::ExistingFile);
  refine->add_option("--text", ref_text, "text SYNE")->required()->check(CLI::ExistingFile);
  refine->add_option("--out", ref_out, "refined SYNE")->required();
  refine->add_option("--loss-out", ref_loss, "per-epoch loss JSONL");
  ref_flags.attach(refine);

  // build-support
  std::string sup_text, sup_out;
  auto* build_support = app.add_subcommand("build-support", "validate and write a support set (SYNE)");
  build_support->add_option("--text", sup_text, "text SYNE")->required()->check(CLI::ExistingFile);
  build_support->add_option("--out", sup_out, "support SYNE")->required();

  // project
  std::string proj_in, proj_support, proj_out, proj_top_k = "all", proj_tau = "1/100";
  auto* project_cmd = app.add_subcommand("project", "project features onto a support set");
  project_cmd->add_option("--input", proj_in, "query SYNE")->required()->check(CLI::ExistingFile);
  project_cmd->add_option("--support", proj_support, "support SYNE")->required()->check(CLI::ExistingFile);
  project_cmd->add_option("--out", proj_out, "projected SYNE")->required();
  project_cmd->add_option("--tau", proj_tau, "projection temperature, e.g. 0.01 or 1/100");
  project_cmd->add_option("--top-k", proj_top_k, "keep the k largest weights, or \"all\"");

  // train / infer / ablate
  ConfigFlags train_flags, infer_flags, ablate_flags;
  auto* train_cmd = app.add_subcommand("train", "train a captioner and write a checkpoint");
  train_flags.attach(train_cmd);
  auto* infer_cmd = app.add_subcommand("infer", "caption image features with a checkpoint");
  infer_flags.attach(infer_cmd);
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score all eight toggle variants");
  ablate_flags.attach(ablate_cmd);
  ablate_cmd->add_option("--out", ablate_out, "report JSON (default stdout)");

  // eval
  std::string eval_cand, eval_refs, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "score candidate captions against references");
  eval_cmd->add_option("--candidates", eval_cand, "JSONL {id, caption}")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--references", eval_refs, "JSONL {id, text} or {id, references}")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "report JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*gen_toy) {
      const PipelineConfig cfg = toy_flags.resolve();
      const std::size_t n = toy_n.value_or(cfg.toy.n_train + cfg.toy.n_heldout);
      const auto records = generate_toy_corpus(ToyGrammar::standard(cfg.toy.grammar_seed), n);
      write_corpus_file(records, toy_out);
    } else if (*encode_toy) {
      if (enc_text_out.empty() && enc_image_out.empty()) {
        throw ValidationError("encode-toy needs --text-out and/or --image-out");
      }
      const ToyEncoderSpec spec = toy_spec_from(enc_flags);
      const auto tokens = token_lists(read_corpus_file(enc_corpus));
      if (!enc_text_out.empty()) write_embeddings_file(toy_encode_texts(tokens, spec), enc_text_out);
      if (!enc_image_out.empty()) {
        write_embeddings_file(toy_encode_images(tokens, spec, enc_offset), enc_image_out);
      }
    } else if (*refine) {
      const PipelineConfig cfg = ref_flags.resolve();
      const Matrix image = read_embeddings_file(ref_image).to_matrix();
      const Matrix text = read_embeddings_file(ref_text).to_matrix();
      const RefineResult result = refine_features(image, text, cfg.refine);
      write_embeddings_file(EmbeddingMatrix::from_matrix(result.refined), ref_out);
      if (!ref_loss.empty()) {
        auto out = open_out(ref_loss);
        for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
          out << nlohmann::ordered_json{{"epoch", e + 1}, {"mean_loss", result.epoch_mean_loss[e]}}.dump()
              << '\n';
        }
      }
      std::cerr << "mean paired cosine: " << mean_paired_cosine(image, text) << " -> "
                << mean_paired_cosine(result.refined, text) << '\n';
    } else if (*build_support) {
      const EmbeddingMatrix text = read_embeddings_file(sup_text);
      // Constructing the set rejects empty and zero-norm rows.
      build_support_set(text.to_matrix(), kProjectionTemperatureCoco);
      write_embeddings_file(text, sup_out);
    } else if (*project_cmd) {
      PipelineConfig scratch;
      set_config_value(scratch, "top_k", proj_top_k);
      set_config_value(scratch, "tau_proj", proj_tau);
      const SupportSet support =
          build_support_set(read_embeddings_file(proj_support).to_matrix(), scratch.tau_proj, scratch.top_k);
      const Matrix queries = read_embeddings_file(proj_in).to_matrix();
      if (static_cast<std::size_t>(queries.cols()) != support.dim()) {
        throw ValidationError("input dim " + std::to_string(queries.cols()) + " != support dim " +
                              std::to_string(support.dim()));
      }
      write_embeddings_file(EmbeddingMatrix::from_matrix(project_rows(queries, support)), proj_out);
    } else if (*train_cmd) {
      run_training_to_files(train_flags.resolve());
    } else if (*infer_cmd) {
      run_inference_to_files(infer_flags.resolve());
    } else if (*ablate_cmd) {
      const PipelineConfig cfg = ablate_flags.resolve();
      const AblationReport report =
          run_ablation(cfg, [](const std::string& line) { std::cerr << line << '\n'; });
      write_text(ablate_out, report.to_json());
    } else if (*eval_cmd) {
      std::ifstream cand(eval_cand), refs(eval_refs);
      const auto pairs = read_eval_pairs(cand, refs);
      write_text(eval_out, score_report_json(evaluate(pairs)));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return EXIT_SUCCESS;
}
