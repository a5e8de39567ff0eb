// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "textcap/errors.hpp"

namespace textcap {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
    if (keep) {
      current.push_back(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

CaptionRecord CaptionRecord::make(std::string id, std::string text,
                                  std::vector<std::string> objects) {
  CaptionRecord r;
  r.id = std::move(id);
  r.tokens = tokenize(text);
  r.text = std::move(text);
  std::unordered_set<std::string> seen;
  for (auto& o : objects) {
    if (seen.insert(o).second) r.objects.push_back(std::move(o));
  }
  return r;
}

std::vector<CaptionRecord> read_corpus(std::istream& source) {
  std::vector<CaptionRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError(line_no, "missing string \"id\"");
    if (!j.contains("text") || !j["text"].is_string()) {
      throw ParseError(line_no, "missing string \"text\"");
    }
    std::vector<std::string> objects;
    if (j.contains("objects") && !j["objects"].is_null()) {
      if (!j["objects"].is_array()) throw ParseError(line_no, "\"objects\" must be an array");
      for (const auto& o : j["objects"]) {
        if (!o.is_string()) throw ParseError(line_no, "\"objects\" entries must be strings");
        objects.push_back(o.get<std::string>());
      }
    }
    auto id = j["id"].get<std::string>();
    if (!ids.insert(id).second) throw ParseError(line_no, "duplicate id \"" + id + "\"");
    records.push_back(CaptionRecord::make(std::move(id), j["text"].get<std::string>(),
                                          std::move(objects)));
  }
  return records;
}

void write_corpus(std::span<const CaptionRecord> records, std::ostream& sink) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["objects"] = r.objects;
    sink << j.dump() << '\n';
  }
  if (!sink) throw IoError("corpus write failed");
}

std::vector<CaptionRecord> read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_corpus(in);
}

void write_corpus_file(std::span<const CaptionRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_corpus(records, out);
}

std::vector<std::vector<std::string>> token_lists(std::span<const CaptionRecord> records) {
  std::vector<std::vector<std::string>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.tokens);
  return out;
}

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};
}  // namespace

Vocabulary::Vocabulary() : id_to_token_(kSpecials) {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  Vocabulary v;
  if (id_to_token.empty()) {
    id_to_token = kSpecials;
  } else if (id_to_token.size() < kSpecials.size() ||
             !std::equal(kSpecials.begin(), kSpecials.end(), id_to_token.begin())) {
    throw ValidationError("vocabulary must start with <pad> <bos> <eos> <unk>");
  }
  v.id_to_token_ = std::move(id_to_token);
  v.token_to_id_.clear();
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate vocabulary token \"" + v.id_to_token_[i] + "\"");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const CaptionRecord> corpus, std::size_t min_freq) {
  if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& r : corpus) {
    for (const auto& t : r.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ids = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (auto& [token, count] : entries) {
    if (count >= std::max<std::size_t>(min_freq, 1)) ids.push_back(token);
  }
  return from_tokens(std::move(ids));
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Vocabulary::encode_caption(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kBos);
  for (const auto& t : tokens) ids.push_back(id(t));
  ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (TokenId i : ids) {
    if (i < kNumSpecials) continue;
    out.push_back(token(i));
  }
  return out;
}

}  // namespace textcap
