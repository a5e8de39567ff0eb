// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "textcap/errors.hpp"
#include "textcap/refinement.hpp"

namespace textcap {

SupportSet::SupportSet(Matrix features, double temperature, std::optional<std::size_t> top_k)
    : features_(std::move(features)), temperature_(temperature), top_k_(top_k) {
  if (features_.rows() == 0) throw ValidationError("support set: no rows");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) {
    throw ValidationError("support set: temperature must be > 0");
  }
  if (top_k_ && *top_k_ == 0) throw ValidationError("support set: top_k must be >= 1");
  unit_rows_ = normalize_rows(features_, "support set");
  norms_ = features_.rowwise().norm();
}

SupportSet build_support_set(const Matrix& text_features, double temperature,
                             std::optional<std::size_t> top_k) {
  return SupportSet(text_features, temperature, top_k);
}

Vector projection_weights(const Eigen::Ref<const Vector>& query, const SupportSet& support) {
  if (static_cast<std::size_t>(query.size()) != support.dim()) {
    throw ValidationError("project: query dim " + std::to_string(query.size()) +
                          " != support dim " + std::to_string(support.dim()));
  }
  const double qn = query.norm();
  if (!(qn > 0.0) || !std::isfinite(qn)) throw NumericalError("project: zero query");

  Vector logits = (support.unit_rows_ * (query / qn)) / support.temperature_;
  Vector w = (logits.array() - logits.maxCoeff()).exp().matrix();

  if (support.top_k_ && *support.top_k_ < support.size()) {
    std::vector<Eigen::Index> idx(support.size());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto k = static_cast<std::ptrdiff_t>(*support.top_k_);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return w(a) > w(b) || (w(a) == w(b) && a < b);
    });
    Vector kept = Vector::Zero(w.size());
    for (std::ptrdiff_t i = 0; i < k; ++i) kept(idx[static_cast<std::size_t>(i)]) = w(idx[static_cast<std::size_t>(i)]);
    w = std::move(kept);
  }
  return w / w.sum();
}

Vector project(const Eigen::Ref<const Vector>& query, const SupportSet& support) {
  const Vector w = projection_weights(query, support);
  return support.features().transpose() * w;
}

Matrix project_rows(const Matrix& queries, const SupportSet& support) {
  Matrix out(queries.rows(), static_cast<Eigen::Index>(support.dim()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out.row(i) = project(queries.row(i).transpose(), support).transpose();
  }
  return out;
}

std::size_t projection_argmax(const Eigen::Ref<const Vector>& query, const SupportSet& support) {
  const Vector w = projection_weights(query, support);
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < w.size(); ++j) {
    if (w(j) > w(best)) best = j;
  }
  return static_cast<std::size_t>(best);
}

}  // namespace textcap
