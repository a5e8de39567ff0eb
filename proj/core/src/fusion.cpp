// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/fusion.hpp"

#include <cmath>
#include <string>

#include "textcap/corpus.hpp"
#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, NormalStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.next();
  return m;
}

}  // namespace

FusionParams FusionParams::init(std::size_t dim, std::size_t heads, std::uint64_t seed) {
  FusionParams p;
  p.heads = heads;
  const auto d = static_cast<Eigen::Index>(dim);
  NormalStream rng(derive_seed(seed, "fusion/init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w_q = random_matrix(d, d, scale, rng);
  p.w_k = random_matrix(d, d, scale, rng);
  p.w_v = random_matrix(d, d, scale, rng);
  p.w_o = random_matrix(d, d, scale, rng);
  p.null_key = random_matrix(1, d, 0.02, rng);
  p.null_value = random_matrix(1, d, 0.02, rng);
  p.validate();
  return p;
}

FusionParams FusionParams::zeros_like(const FusionParams& other) {
  FusionParams p = other;
  visit(p, [](const char*, Matrix& m) { m.setZero(); });
  return p;
}

void FusionParams::validate() const {
  const auto d = w_q.rows();
  if (d == 0 || heads == 0) throw ValidationError("fusion: empty parameters");
  if (static_cast<std::size_t>(d) % heads != 0) {
    throw ValidationError("fusion: dim " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(heads));
  }
  for (const Matrix* m : {&w_q, &w_k, &w_v, &w_o}) {
    if (m->rows() != d || m->cols() != d) throw ValidationError("fusion: projection not d x d");
  }
  if (null_key.rows() != 1 || null_key.cols() != d || null_value.rows() != 1 ||
      null_value.cols() != d) {
    throw ValidationError("fusion: null pair must be 1 x d");
  }
}

ObjectFeatureSet encode_objects(std::span<const std::string> objects, const TextEncoder& encoder,
                                std::size_t dim) {
  ObjectFeatureSet set;
  set.features.resize(static_cast<Eigen::Index>(objects.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const auto tokens = tokenize(objects[k]);
    if (tokens.empty()) throw ValidationError("encode_objects: tag \"" + objects[k] + "\" has no tokens");
    const Vector v = encoder(tokens);
    if (static_cast<std::size_t>(v.size()) != dim) {
      throw ValidationError("encode_objects: encoder dim " + std::to_string(v.size()) +
                            " != " + std::to_string(dim));
    }
    set.features.row(static_cast<Eigen::Index>(k)) = v.transpose();
    set.tags.push_back(objects[k]);
  }
  return set;
}

FuseResult fuse(const Eigen::Ref<const Vector>& query, const ObjectFeatureSet& objects,
                const FusionParams& params) {
  const auto d = params.w_q.rows();
  if (query.size() != d) throw ValidationError("fuse: query dim mismatch");
  if (objects.features.rows() > 0 && objects.features.cols() != d) {
    throw ValidationError("fuse: object feature dim mismatch");
  }
  const auto m = objects.features.rows();
  const auto heads = static_cast<Eigen::Index>(params.heads);
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  FuseResult r;
  r.query = query;
  r.objects = objects.features.rows() > 0 ? objects.features : Matrix(0, d);
  r.q = query.transpose() * params.w_q;
  r.keys.resize(m + 1, d);
  r.values.resize(m + 1, d);
  r.keys.row(0) = params.null_key;
  r.values.row(0) = params.null_value;
  if (m > 0) {
    r.keys.bottomRows(m) = r.objects * params.w_k;
    r.values.bottomRows(m) = r.objects * params.w_v;
  }
  r.attention.resize(heads, m + 1);
  r.concat.resize(d);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    RowVector logits = (r.keys(Eigen::all, cols) * r.q(cols).transpose()).transpose() * scale;
    RowVector w = (logits.array() - logits.maxCoeff()).exp().matrix();
    w /= w.sum();
    r.attention.row(h) = w;
    r.concat(cols) = w * r.values(Eigen::all, cols);
  }
  r.u = (r.concat * params.w_o).transpose();
  return r;
}

FuseGrads fuse_backward(const FuseResult& fwd, const FusionParams& params,
                        const Eigen::Ref<const Vector>& grad_u) {
  const auto d = params.w_q.rows();
  const auto heads = static_cast<Eigen::Index>(params.heads);
  const auto dh = d / heads;
  const auto slots = fwd.keys.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  FuseGrads g;
  g.params = FusionParams::zeros_like(params);
  const RowVector du = grad_u.transpose();
  g.params.w_o = fwd.concat.transpose() * du;
  const RowVector dconcat = du * params.w_o.transpose();

  RowVector dq = RowVector::Zero(d);
  Matrix dkeys = Matrix::Zero(slots, d);
  Matrix dvalues = Matrix::Zero(slots, d);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    const RowVector a = fwd.attention.row(h);
    const RowVector dc = dconcat(cols);
    dvalues(Eigen::all, cols) = a.transpose() * dc;
    const RowVector da = (fwd.values(Eigen::all, cols) * dc.transpose()).transpose();
    const RowVector ds = a.cwiseProduct((da.array() - a.dot(da)).matrix()) * scale;
    dq(cols) = ds * fwd.keys(Eigen::all, cols);
    dkeys(Eigen::all, cols) = ds.transpose() * fwd.q(cols);
  }

  g.params.null_key = dkeys.row(0);
  g.params.null_value = dvalues.row(0);
  const auto m = slots - 1;
  g.objects = Matrix::Zero(m, d);
  if (m > 0) {
    const Matrix dk = dkeys.bottomRows(m);
    const Matrix dv = dvalues.bottomRows(m);
    g.params.w_k = fwd.objects.transpose() * dk;
    g.params.w_v = fwd.objects.transpose() * dv;
    g.objects = dk * params.w_k.transpose() + dv * params.w_v.transpose();
  }
  g.params.w_q = fwd.query * dq;
  g.query = (dq * params.w_q.transpose()).transpose();
  return g;
}

}  // namespace textcap
