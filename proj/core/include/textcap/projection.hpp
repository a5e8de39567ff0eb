// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>

#include "textcap/tensor.hpp"

namespace textcap {

inline constexpr double kProjectionTemperatureCoco = 1.0 / 100.0;
inline constexpr double kProjectionTemperatureFlickr = 1.0 / 80.0;

// Frozen text features that image-side vectors are re-expressed in.
// Rows are kept verbatim; normalized copies serve the similarity step.
class SupportSet {
 public:
  SupportSet(Matrix features, double temperature, std::optional<std::size_t> top_k = std::nullopt);

  std::size_t size() const noexcept { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  double temperature() const noexcept { return temperature_; }
  std::optional<std::size_t> top_k() const noexcept { return top_k_; }
  const Matrix& features() const noexcept { return features_; }
  const Vector& row_norms() const noexcept { return norms_; }

 private:
  Matrix features_;
  Matrix unit_rows_;
  Vector norms_;
  double temperature_;
  std::optional<std::size_t> top_k_;

  friend Vector projection_weights(const Eigen::Ref<const Vector>& query, const SupportSet& support);
};

SupportSet build_support_set(const Matrix& text_features, double temperature,
                             std::optional<std::size_t> top_k = std::nullopt);

// softmax_j(cos(query, t_j) / tau), max-subtracted. With top_k set, all but
// the k largest weights are zeroed (ties: lower index wins) and the rest
// renormalized.
Vector projection_weights(const Eigen::Ref<const Vector>& query, const SupportSet& support);

// sum_j w_j t_j over the raw support rows.
Vector project(const Eigen::Ref<const Vector>& query, const SupportSet& support);

// Row-wise project over a query matrix.
Matrix project_rows(const Matrix& queries, const SupportSet& support);

// Index of the largest weight, lowest index on ties.
std::size_t projection_argmax(const Eigen::Ref<const Vector>& query, const SupportSet& support);

}  // namespace textcap
