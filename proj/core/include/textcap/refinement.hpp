// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "textcap/tensor.hpp"

namespace textcap {

// (a/|a|) . (b/|b|). Throws NumericalError on a zero vector.
double cosine_sim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

// Row-normalized copy; throws on zero rows.
Matrix normalize_rows(const Matrix& m, const char* what = "matrix");

// Image-to-text InfoNCE over a batch of aligned rows:
//   L = -(1/b) sum_i log softmax_j(cos(s_i, t_j) / tau)[i]
// Only the image side S receives gradient.
double contrastive_loss(const Matrix& image, const Matrix& text, double temperature);
Matrix contrastive_grad(const Matrix& image, const Matrix& text, double temperature);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};
LossAndGrad contrastive_loss_and_grad(const Matrix& image, const Matrix& text, double temperature);

struct RefineConfig {
  double temperature = 0.01;
  double learning_rate = 1e-5;
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

struct RefineResult {
  Matrix refined;
  std::vector<double> epoch_mean_loss;
};

// Adam on the pseudo image rows, text rows frozen. Each row carries its own
// moment state and is updated only when it appears in a batch. A trailing
// batch of one row is skipped since its loss is identically zero.
// epoch_mean_loss[e] is measured after epoch e over in-order batches of
// batch_size rows.
RefineResult refine_features(const Matrix& image, const Matrix& text, const RefineConfig& cfg);

// Mean over i of cos(a_i, b_i).
double mean_paired_cosine(const Matrix& a, const Matrix& b);

}  // namespace textcap
