// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

std::string Toggles::name() const {
  if (fo && fp && af) return "Full";
  if (!fo && !fp && !af) return "Baseline";
  if (fo && !fp && !af) return "+FO";
  if (!fo && fp && !af) return "+FP";
  if (!fo && !fp && af) return "+AF";
  if (fo && !fp && af) return "+FO&AF";
  if (fo && fp && !af) return "+FP&FO";
  return "+FP&AF";
}

std::vector<Toggles> Toggles::all_variants() {
  return {{false, false, false}, {true, false, false}, {false, true, false},
          {false, false, true},  {true, false, true},  {true, true, false},
          {false, true, true},   {true, true, true}};
}

void PipelineConfig::derive_seeds() {
  refine.shuffle_seed = derive_seed(seed, "refine");
  decoder.seed = derive_seed(seed, "decoder");
}

void PipelineConfig::validate() const {
  if (!(tau_proj > 0.0)) throw ValidationError("tau_proj must be > 0");
  if (top_k && *top_k == 0) throw ValidationError("top_k must be >= 1");
  refine.validate();
  decoder.validate();
  if (toy.enabled) {
    toy.encoder.validate();
    if (toy.n_train == 0) throw ValidationError("toy.n_train must be >= 1");
  }
  if (beam_size == 0) throw ValidationError("beam_size must be >= 1");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_quotes(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config " + key + ": expected a boolean, got \"" + v + "\"");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("config " + key + ": expected an unsigned integer, got \"" + v + "\"");
  }
  return out;
}

// Accepts plain decimals and "a/b" fractions such as 1/100.
double parse_real(const std::string& key, const std::string& v) {
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    const double num = parse_real(key, trim(v.substr(0, slash)));
    const double den = parse_real(key, trim(v.substr(slash + 1)));
    if (den == 0.0) throw ValidationError("config " + key + ": division by zero");
    return num / den;
  }
  std::istringstream in(v);
  in.imbue(std::locale::classic());
  double out = 0.0;
  in >> out;
  if (in.fail() || !in.eof()) {
    throw ValidationError("config " + key + ": expected a number, got \"" + v + "\"");
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& v)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [](std::size_t PipelineConfig::*f) {
      return [f](PipelineConfig& c, const std::string& k, const std::string& v) {
        c.*f = static_cast<std::size_t>(parse_u64(k, v));
      };
    };
    t["seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.seed = parse_u64(k, v);
      c.derive_seeds();
    };
    t["fo"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toggles.fo = parse_bool(k, v); };
    t["fp"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toggles.fp = parse_bool(k, v); };
    t["af"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toggles.af = parse_bool(k, v); };
    t["tau_con"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.refine.temperature = parse_real(k, v); };
    t["tau_proj"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.tau_proj = parse_real(k, v); };
    t["top_k"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      if (v == "all" || v.empty()) {
        c.top_k.reset();
      } else {
        c.top_k = static_cast<std::size_t>(parse_u64(k, v));
      }
    };
    t["min_freq"] = size_field(&PipelineConfig::min_freq);
    t["beam_size"] = size_field(&PipelineConfig::beam_size);
    t["refine.learning_rate"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.refine.learning_rate = parse_real(k, v); };
    t["refine.epochs"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.refine.epochs = parse_u64(k, v); };
    t["refine.batch_size"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.refine.batch_size = parse_u64(k, v); };
    t["decoder.layers"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.layers = parse_u64(k, v); };
    t["decoder.heads"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.heads = parse_u64(k, v); };
    t["decoder.model_dim"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.model_dim = parse_u64(k, v); };
    t["decoder.ff_dim"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.ff_dim = parse_u64(k, v); };
    t["decoder.max_len"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.max_len = parse_u64(k, v); };
    t["decoder.dropout"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.dropout = parse_real(k, v); };
    t["decoder.learning_rate"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.learning_rate = parse_real(k, v); };
    t["decoder.epochs"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.epochs = parse_u64(k, v); };
    t["decoder.batch_size"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.batch_size = parse_u64(k, v); };
    t["decoder.fusion_heads"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.decoder.fusion_heads = parse_u64(k, v); };
    t["toy"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.enabled = parse_bool(k, v); };
    t["toy.n_train"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.n_train = parse_u64(k, v); };
    t["toy.n_heldout"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.n_heldout = parse_u64(k, v); };
    t["toy.dim"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.encoder.dim = parse_u64(k, v); };
    t["toy.gap"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.encoder.gap_scale = parse_real(k, v); };
    t["toy.noise"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.encoder.noise_scale = parse_real(k, v); };
    t["toy.encoder_seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.encoder.seed = parse_u64(k, v); };
    t["toy.grammar_seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.toy.grammar_seed = parse_u64(k, v); };
    auto path_field = [](std::filesystem::path PipelinePaths::*f) {
      return [f](PipelineConfig& c, const std::string&, const std::string& v) { c.paths.*f = v; };
    };
    t["paths.train_corpus"] = path_field(&PipelinePaths::train_corpus);
    t["paths.text_embeddings"] = path_field(&PipelinePaths::text_embeddings);
    t["paths.image_embeddings"] = path_field(&PipelinePaths::image_embeddings);
    t["paths.inference_corpus"] = path_field(&PipelinePaths::inference_corpus);
    t["paths.inference_images"] = path_field(&PipelinePaths::inference_images);
    t["paths.support"] = path_field(&PipelinePaths::support);
    t["paths.object_corpus"] = path_field(&PipelinePaths::object_corpus);
    t["paths.object_embeddings"] = path_field(&PipelinePaths::object_embeddings);
    t["paths.checkpoint"] = path_field(&PipelinePaths::checkpoint);
    t["paths.report"] = path_field(&PipelinePaths::report);
    t["paths.captions"] = path_field(&PipelinePaths::captions);
    return t;
  }();
  return table;
}

}  // namespace

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  const auto it = setters().find(k);
  if (it == setters().end()) throw ValidationError("unknown config key \"" + k + "\"");
  it->second(cfg, k, strip_quotes(trim(value)));
}

void apply_config_text(PipelineConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(cfg, body.substr(0, eq), body.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

PipelineConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  PipelineConfig cfg;
  cfg.derive_seeds();
  apply_config_text(cfg, buf.str());
  return cfg;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

std::string config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["fo"] = c.toggles.fo;
  j["fp"] = c.toggles.fp;
  j["af"] = c.toggles.af;
  j["tau_con"] = c.refine.temperature;
  j["tau_proj"] = c.tau_proj;
  j["top_k"] = c.top_k ? nlohmann::json(*c.top_k) : nlohmann::json("all");
  j["min_freq"] = c.min_freq;
  j["beam_size"] = c.beam_size;
  j["refine"] = {{"learning_rate", c.refine.learning_rate},
                 {"epochs", c.refine.epochs},
                 {"batch_size", c.refine.batch_size},
                 {"beta1", c.refine.beta1},
                 {"beta2", c.refine.beta2},
                 {"epsilon", c.refine.epsilon},
                 {"shuffle_seed", c.refine.shuffle_seed}};
  j["decoder"] = {{"layers", c.decoder.layers},
                  {"heads", c.decoder.heads},
                  {"model_dim", c.decoder.model_dim},
                  {"ff_dim", c.decoder.ff_dim},
                  {"max_len", c.decoder.max_len},
                  {"dropout", c.decoder.dropout},
                  {"learning_rate", c.decoder.learning_rate},
                  {"epochs", c.decoder.epochs},
                  {"batch_size", c.decoder.batch_size},
                  {"fusion_heads", c.decoder.fusion_heads},
                  {"seed", c.decoder.seed}};
  j["toy"] = {{"enabled", c.toy.enabled},
              {"n_train", c.toy.n_train},
              {"n_heldout", c.toy.n_heldout},
              {"dim", c.toy.encoder.dim},
              {"gap", c.toy.encoder.gap_scale},
              {"noise", c.toy.encoder.noise_scale},
              {"encoder_seed", c.toy.encoder.seed},
              {"grammar_seed", c.toy.grammar_seed}};
  j["paths"] = {{"train_corpus", c.paths.train_corpus.string()},
                {"text_embeddings", c.paths.text_embeddings.string()},
                {"image_embeddings", c.paths.image_embeddings.string()},
                {"inference_corpus", c.paths.inference_corpus.string()},
                {"inference_images", c.paths.inference_images.string()},
                {"support", c.paths.support.string()},
                {"object_corpus", c.paths.object_corpus.string()},
                {"object_embeddings", c.paths.object_embeddings.string()},
                {"checkpoint", c.paths.checkpoint.string()},
                {"report", c.paths.report.string()},
                {"captions", c.paths.captions.string()}};
  return j.dump();
}

PipelineConfig toy_benchmark_config() {
  PipelineConfig c;
  c.toy.enabled = true;
  c.toy.n_train = 500;
  c.toy.n_heldout = 100;
  c.toy.encoder = ToyEncoderSpec{64, 7, 0.5, 0.1};
  c.toy.grammar_seed = 1;
  c.min_freq = 1;
  // Toy cosines spread wider than real contrastive features; 1/25 was
  // picked on toy records 600-699, which neither split uses.
  c.tau_proj = 0.04;
  c.refine.temperature = 0.01;
  c.refine.learning_rate = 1e-5;
  c.refine.epochs = 5;
  c.refine.batch_size = 128;
  c.decoder.layers = 4;
  c.decoder.heads = 4;
  c.decoder.model_dim = 64;
  c.decoder.ff_dim = 256;
  c.decoder.max_len = 16;
  c.decoder.dropout = 0.1;
  c.decoder.learning_rate = 1e-3;
  c.decoder.epochs = 20;
  c.decoder.batch_size = 32;
  c.decoder.fusion_heads = 4;
  c.seed = 2024;
  c.derive_seeds();
  return c;
}

}  // namespace textcap
