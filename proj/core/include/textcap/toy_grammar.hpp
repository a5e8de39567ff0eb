// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textcap/corpus.hpp"

namespace textcap {

// Template "a/the {color} {object} {verb-phrase} {place}". Distinct records
// differ in at least one of color/object/verb/place; the article is drawn
// per record and does not count toward distinctness.
struct ToyGrammar {
  std::vector<std::string> articles;
  std::vector<std::string> colors;
  std::vector<std::string> objects;
  std::vector<std::string> verb_phrases;
  std::vector<std::string> places;
  std::uint64_t seed = 1;

  static ToyGrammar standard(std::uint64_t seed = 1);

  std::size_t combinations() const noexcept {
    return colors.size() * objects.size() * verb_phrases.size() * places.size();
  }
};

// n distinct records, deterministic in grammar.seed. Ids are "toy-<k>".
// A prefix of a longer generation is identical to a shorter one, so
// generate(n_train + n_heldout) splits into disjoint train/held-out sets.
std::vector<CaptionRecord> generate_toy_corpus(const ToyGrammar& grammar, std::size_t n);

}  // namespace textcap
