// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/toy_grammar.hpp"

#include <numeric>
#include <string>

#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

ToyGrammar ToyGrammar::standard(std::uint64_t seed) {
  ToyGrammar g;
  g.articles = {"a", "the"};
  g.colors = {"red", "blue", "green", "yellow", "black", "white"};
  g.objects = {"dog", "cat", "horse", "bird", "cow", "sheep", "goat", "bear"};
  g.verb_phrases = {"runs through", "sits in", "stands near", "walks across", "rests beside"};
  g.places = {"the park", "the field", "the street", "the garden", "the beach"};
  g.seed = seed;
  return g;
}

std::vector<CaptionRecord> generate_toy_corpus(const ToyGrammar& grammar, std::size_t n) {
  if (n == 0) throw ValidationError("generate_toy_corpus: n must be >= 1");
  if (grammar.articles.empty() || grammar.combinations() == 0) {
    throw ValidationError("generate_toy_corpus: grammar has an empty word list");
  }
  const std::size_t total = grammar.combinations();
  if (n > total) {
    throw ValidationError("generate_toy_corpus: n=" + std::to_string(n) + " exceeds " +
                          std::to_string(total) + " distinct combinations");
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 shuffle(derive_seed(grammar.seed, "toy-grammar/order"));
  for (std::size_t i = total - 1; i > 0; --i) {
    const std::size_t j = shuffle.next() % (i + 1);
    std::swap(order[i], order[j]);
  }

  const std::uint64_t article_seed = derive_seed(grammar.seed, "toy-grammar/article");
  std::vector<CaptionRecord> records;
  records.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t code = order[k];
    const std::size_t place = code % grammar.places.size();
    code /= grammar.places.size();
    const std::size_t verb = code % grammar.verb_phrases.size();
    code /= grammar.verb_phrases.size();
    const std::size_t object = code % grammar.objects.size();
    code /= grammar.objects.size();
    const std::size_t color = code;

    SplitMix64 pick(article_seed ^ static_cast<std::uint64_t>(k));
    const auto& article = grammar.articles[pick.next() % grammar.articles.size()];
    const auto& obj = grammar.objects[object];
    std::string text = article + " " + grammar.colors[color] + " " + obj + " " +
                       grammar.verb_phrases[verb] + " " + grammar.places[place];
    records.push_back(CaptionRecord::make("toy-" + std::to_string(k), std::move(text), {obj}));
  }
  return records;
}

}  // namespace textcap
