// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textcap {

using TokenId = std::int32_t;

// Lowercase, map anything outside [a-z0-9'] to a space, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

struct CaptionRecord {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;   // always tokenize(text)
  std::vector<std::string> objects;  // detected object tags, no duplicates

  static CaptionRecord make(std::string id, std::string text,
                            std::vector<std::string> objects = {});

  bool operator==(const CaptionRecord&) const = default;
};

// JSONL with one {"id", "text", "objects"} object per line. Row k of the
// corpus aligns with row k of every embedding file derived from it.
std::vector<CaptionRecord> read_corpus(std::istream& source);
void write_corpus(std::span<const CaptionRecord> records, std::ostream& sink);
std::vector<CaptionRecord> read_corpus_file(const std::filesystem::path& path);
void write_corpus_file(std::span<const CaptionRecord> records, const std::filesystem::path& path);

std::vector<std::vector<std::string>> token_lists(std::span<const CaptionRecord> records);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kNumSpecials = 4;

  Vocabulary();

  // Ordered by descending frequency, ties broken lexicographically. Tokens
  // seen fewer than min_freq times are left out and encode to UNK.
  static Vocabulary build(std::span<const CaptionRecord> corpus, std::size_t min_freq);
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  std::size_t size() const noexcept { return id_to_token_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  // BOS w_1 .. w_n EOS
  std::vector<TokenId> encode_caption(std::span<const std::string> tokens) const;
  // Drops specials.
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

std::string join_tokens(std::span<const std::string> tokens);

}  // namespace textcap
