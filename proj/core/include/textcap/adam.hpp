// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "textcap/tensor.hpp"

namespace textcap {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers for one tensor. `step` is the 1-based count
// of updates applied so far, used for bias correction.
struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;

  template <class Derived>
  void update(const AdamConfig& cfg, Eigen::MatrixBase<Derived>&& param, const Matrix& grad) {
    if (m.size() == 0) {
      m = Matrix::Zero(grad.rows(), grad.cols());
      v = Matrix::Zero(grad.rows(), grad.cols());
    }
    ++step;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    param.derived().array() -=
        cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  }

  template <class Derived>
  void update(const AdamConfig& cfg, Eigen::MatrixBase<Derived>& param, const Matrix& grad) {
    update(cfg, std::move(param), grad);
  }
};

}  // namespace textcap
