// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <unordered_map>

#include "textcap/errors.hpp"

namespace textcap {

namespace {

constexpr int kMaxN = 4;
constexpr double kRougeBeta = 1.2;
constexpr double kCiderSigma = 6.0;

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, double>;

NGramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NGramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                 tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1.0;
  }
  return counts;
}

void require_pairs(std::span<const EvalPair> pairs, const char* metric) {
  if (pairs.empty()) throw ValidationError(std::string(metric) + ": no candidates");
  for (const auto& p : pairs) {
    if (p.references.empty()) throw ValidationError(std::string(metric) + ": pair without references");
  }
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "bleu4");
  std::array<double, kMaxN> matched{};
  std::array<double, kMaxN> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (const auto& p : pairs) {
    const auto c = p.candidate.size();
    cand_len += static_cast<double>(c);
    std::size_t closest = p.references.front().size();
    for (const auto& r : p.references) {
      const auto diff = [&](std::size_t len) { return len > c ? len - c : c - len; };
      if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
        closest = r.size();
      }
    }
    ref_len += static_cast<double>(closest);
    for (int n = 1; n <= kMaxN; ++n) {
      const NGramCounts cand = count_ngrams(p.candidate, n);
      NGramCounts max_ref;
      for (const auto& r : p.references) {
        for (const auto& [g, cnt] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
      }
      for (const auto& [g, cnt] : cand) {
        total[n - 1] += cnt;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < kMaxN; ++n) {
    if (total[n] == 0.0 || matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / kMaxN);
}

std::vector<double> rouge_l_per_pair(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "rouge_l");
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    double best_p = 0.0;
    double best_r = 0.0;
    if (!p.candidate.empty()) {
      for (const auto& r : p.references) {
        if (r.empty()) continue;
        const auto lcs = static_cast<double>(lcs_length(r, p.candidate));
        best_p = std::max(best_p, lcs / static_cast<double>(p.candidate.size()));
        best_r = std::max(best_r, lcs / static_cast<double>(r.size()));
      }
    }
    double f = 0.0;
    if (best_p > 0.0 && best_r > 0.0) {
      const double b2 = kRougeBeta * kRougeBeta;
      f = ((1.0 + b2) * best_p * best_r) / (best_r + b2 * best_p);
    }
    scores.push_back(f);
  }
  return scores;
}

double rouge_l(std::span<const EvalPair> pairs) {
  const auto s = rouge_l_per_pair(pairs);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

std::vector<double> cider_d_per_pair(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "cider_d");
  std::set<std::vector<std::vector<std::string>>> distinct;
  for (const auto& p : pairs) distinct.insert(p.references);
  if (distinct.size() < 2) {
    throw ValidationError("cider_d: need at least two distinct reference sets for document frequency");
  }

  // Document frequency: number of pairs whose reference set contains the n-gram.
  std::map<NGram, double> df;
  for (const auto& p : pairs) {
    std::set<NGram> seen;
    for (const auto& r : p.references) {
      for (int n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, cnt] : count_ngrams(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(pairs.size()));

  struct TfIdf {
    std::array<std::map<NGram, double>, kMaxN> vec;
    std::array<double, kMaxN> sq_norm{};
    double length = 0.0;
  };
  const auto to_vec = [&](const std::vector<std::string>& tokens) {
    TfIdf out;
    out.length = static_cast<double>(tokens.size());
    for (int n = 1; n <= kMaxN; ++n) {
      for (const auto& [g, tf] : count_ngrams(tokens, n)) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
        const double w = tf * (log_n - std::log(d));
        out.vec[n - 1][g] = w;
        out.sq_norm[n - 1] += w * w;
      }
    }
    return out;
  };

  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const TfIdf cand = to_vec(p.candidate);
    std::array<double, kMaxN> acc{};
    for (const auto& r : p.references) {
      const TfIdf ref = to_vec(r);
      const double delta = cand.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
      for (int n = 0; n < kMaxN; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : cand.vec[n]) {
          const auto it = ref.vec[n].find(g);
          if (it != ref.vec[n].end()) val += std::min(w, it->second) * it->second;
        }
        // sqrt(a * b) rather than sqrt(a) * sqrt(b): identical vectors give
        // exactly 1.
        if (cand.sq_norm[n] != 0.0 && ref.sq_norm[n] != 0.0) {
          val /= std::sqrt(cand.sq_norm[n] * ref.sq_norm[n]);
        } else {
          val = 0.0;
        }
        acc[n] += val * penalty;
      }
    }
    double mean_n = 0.0;
    for (double v : acc) mean_n += v;
    mean_n /= kMaxN;
    scores.push_back(10.0 * mean_n / static_cast<double>(p.references.size()));
  }
  return scores;
}

double cider_d(std::span<const EvalPair> pairs) {
  const auto s = cider_d_per_pair(pairs);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

ScoreReport evaluate(std::span<const EvalPair> pairs) {
  return {bleu4(pairs), rouge_l(pairs), cider_d(pairs), pairs.size()};
}

}  // namespace textcap
