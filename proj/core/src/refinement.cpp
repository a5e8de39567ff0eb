// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/refinement.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "textcap/adam.hpp"
#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

namespace {

void check_pair(const Matrix& image, const Matrix& text) {
  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw ValidationError("contrastive: shape mismatch " + std::to_string(image.rows()) + "x" +
                          std::to_string(image.cols()) + " vs " + std::to_string(text.rows()) +
                          "x" + std::to_string(text.cols()));
  }
  if (image.rows() == 0) throw ValidationError("contrastive: empty batch");
}

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("temperature must be > 0");
}

}  // namespace

double cosine_sim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericalError("cosine_sim: zero vector");
  return (a / na).dot(b / nb);
}

Matrix normalize_rows(const Matrix& m, const char* what) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericalError(std::string(what) + ": zero or non-finite row " + std::to_string(i));
    }
    out.row(i) = m.row(i) / n;
  }
  return out;
}

LossAndGrad contrastive_loss_and_grad(const Matrix& image, const Matrix& text, double temperature) {
  check_pair(image, text);
  check_temperature(temperature);
  const auto b = image.rows();
  const Matrix s_hat = normalize_rows(image, "image features");
  const Matrix t_hat = normalize_rows(text, "text features");
  const Matrix logits = (s_hat * t_hat.transpose()) / temperature;

  LossAndGrad out;
  Matrix dlogits(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const RowVector e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    out.loss += (mx + std::log(z)) - logits(i, i);
    dlogits.row(i) = e / z;
    dlogits(i, i) -= 1.0;
  }
  out.loss /= static_cast<double>(b);
  dlogits /= static_cast<double>(b);

  // d/d s_hat, then through the row normalization.
  const Matrix g_hat = (dlogits * t_hat) / temperature;
  out.grad.resize(b, image.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    const double n = image.row(i).norm();
    const double radial = g_hat.row(i).dot(s_hat.row(i));
    out.grad.row(i) = (g_hat.row(i) - radial * s_hat.row(i)) / n;
  }
  return out;
}

double contrastive_loss(const Matrix& image, const Matrix& text, double temperature) {
  return contrastive_loss_and_grad(image, text, temperature).loss;
}

Matrix contrastive_grad(const Matrix& image, const Matrix& text, double temperature) {
  return contrastive_loss_and_grad(image, text, temperature).grad;
}

void RefineConfig::validate() const {
  check_temperature(temperature);
  if (!(learning_rate >= 0.0)) throw ValidationError("refine learning_rate must be >= 0");
  if (batch_size < 2) throw ValidationError("refine batch_size must be >= 2");
}

namespace {

// Mean loss over in-order batches, so epochs are scored on the same
// partition regardless of the training shuffle.
double partitioned_loss(const Matrix& image, const Matrix& text, const RefineConfig& cfg) {
  const auto n = static_cast<std::size_t>(image.rows());
  double loss_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t b = std::min(cfg.batch_size, n - start);
    if (b < 2) continue;
    const auto rows = static_cast<Eigen::Index>(b);
    const auto first = static_cast<Eigen::Index>(start);
    const double loss = contrastive_loss(image.middleRows(first, rows), text.middleRows(first, rows),
                                         cfg.temperature);
    if (!std::isfinite(loss)) throw NumericalError("refine_features: non-finite loss");
    loss_sum += loss * static_cast<double>(b);
    counted += b;
  }
  return counted ? loss_sum / static_cast<double>(counted) : 0.0;
}

}  // namespace

RefineResult refine_features(const Matrix& image, const Matrix& text, const RefineConfig& cfg) {
  cfg.validate();
  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw ValidationError("refine_features: image and text matrices are not aligned");
  }
  const auto n = static_cast<std::size_t>(image.rows());
  const auto d = image.cols();
  RefineResult result;
  result.refined = image;

  const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  std::vector<AdamState> state(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SplitMix64 rng(derive_seed(cfg.shuffle_seed, "refine/epoch-" + std::to_string(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      if (b < 2) continue;
      Matrix s(static_cast<Eigen::Index>(b), d);
      Matrix t(static_cast<Eigen::Index>(b), d);
      for (std::size_t k = 0; k < b; ++k) {
        s.row(static_cast<Eigen::Index>(k)) = result.refined.row(static_cast<Eigen::Index>(order[start + k]));
        t.row(static_cast<Eigen::Index>(k)) = text.row(static_cast<Eigen::Index>(order[start + k]));
      }
      const LossAndGrad lg = contrastive_loss_and_grad(s, t, cfg.temperature);
      if (!std::isfinite(lg.loss)) throw NumericalError("refine_features: non-finite loss");
      for (std::size_t k = 0; k < b; ++k) {
        const auto row = static_cast<Eigen::Index>(order[start + k]);
        state[order[start + k]].update(adam, result.refined.row(row),
                                       Matrix(lg.grad.row(static_cast<Eigen::Index>(k))));
      }
    }
    result.epoch_mean_loss.push_back(partitioned_loss(result.refined, text, cfg));
  }
  return result;
}

double mean_paired_cosine(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw ValidationError("mean_paired_cosine: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) sum += cosine_sim(a.row(i), b.row(i));
  return sum / static_cast<double>(a.rows());
}

}  // namespace textcap
