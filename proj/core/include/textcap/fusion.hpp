// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "textcap/tensor.hpp"

namespace textcap {

// Single-query multi-head attention that pools object tag features into one
// auxiliary vector. A learned null key/value pair (already in projected
// space) is prepended to the keys and values so an empty object list still
// yields a defined output.
struct FusionParams {
  std::size_t heads = 4;
  Matrix w_q;         // d x d
  Matrix w_k;         // d x d
  Matrix w_v;         // d x d
  Matrix w_o;         // d x d
  Matrix null_key;    // 1 x d
  Matrix null_value;  // 1 x d

  static FusionParams init(std::size_t dim, std::size_t heads, std::uint64_t seed);
  static FusionParams zeros_like(const FusionParams& other);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(w_q.rows()); }
  void validate() const;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("w_q", self.w_q);
    f("w_k", self.w_k);
    f("w_v", self.w_v);
    f("w_o", self.w_o);
    f("null_key", self.null_key);
    f("null_value", self.null_value);
  }
};

struct ObjectFeatureSet {
  Matrix features;  // m x d, row k encodes tags[k]
  std::vector<std::string> tags;

  std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
};

using TextEncoder = std::function<Vector(std::span<const std::string> tokens)>;

// Row k = encoder(tokenize(objects[k])). An empty list gives a 0 x dim set.
ObjectFeatureSet encode_objects(std::span<const std::string> objects, const TextEncoder& encoder,
                                std::size_t dim);

struct FuseResult {
  Vector u;
  Matrix attention;  // heads x (m + 1); column 0 is the null slot

  // Saved activations for fuse_backward.
  Vector query;
  Matrix objects;
  RowVector q;
  Matrix keys;
  Matrix values;
  RowVector concat;
};

FuseResult fuse(const Eigen::Ref<const Vector>& query, const ObjectFeatureSet& objects,
                const FusionParams& params);

struct FuseGrads {
  FusionParams params;  // same shapes as the forward params
  Vector query;
  Matrix objects;
};

FuseGrads fuse_backward(const FuseResult& forward, const FusionParams& params,
                        const Eigen::Ref<const Vector>& grad_u);

}  // namespace textcap
