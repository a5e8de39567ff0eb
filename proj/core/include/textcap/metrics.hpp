// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

namespace textcap {

// Candidate and references, already tokenized with textcap::tokenize.
struct EvalPair {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;
};

// Corpus BLEU-4: clipped n-gram counts pooled over all pairs, uniform
// geometric mean over n = 1..4, brevity penalty against the closest
// reference length (shorter wins ties). No smoothing.
double bleu4(std::span<const EvalPair> pairs);

// ROUGE-L F-measure with beta = 1.2 per pair, taking the best LCS precision
// and best LCS recall over the references; corpus score is the mean.
double rouge_l(std::span<const EvalPair> pairs);
std::vector<double> rouge_l_per_pair(std::span<const EvalPair> pairs);

// CIDEr-D (n = 1..4, sigma = 6, clipped tf-idf, x10). Document frequency is
// taken over the reference sets of the given pairs, so at least two
// distinct reference sets are required.
double cider_d(std::span<const EvalPair> pairs);
std::vector<double> cider_d_per_pair(std::span<const EvalPair> pairs);

struct ScoreReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::size_t n_pairs = 0;
};

ScoreReport evaluate(std::span<const EvalPair> pairs);

}  // namespace textcap
