// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "textcap/tensor.hpp"

namespace textcap {

// Dense row-major n x d matrix of f32 features, one row per corpus item.
// Every value is finite; the constructor enforces it.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

  static EmbeddingMatrix from_matrix(const Matrix& m);
  Matrix to_matrix() const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<const float> row(std::size_t i) const;
  void set_row(std::size_t i, std::span<const double> values);

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// SYNE container, little-endian:
//   "SYNE" | u32 version=1 | u32 rows | u32 dim | u8 dtype | payload
// dtype 0 is f32 (the only one accepted for embeddings); dtype 1 (f64) is
// reserved for checkpoint tensor blocks.
inline constexpr std::size_t kSyneHeaderSize = 17;
inline constexpr std::uint32_t kSyneVersion = 1;

enum class SyneDtype : std::uint8_t { kF32 = 0, kF64 = 1 };

struct SyneHeader {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  SyneDtype dtype = SyneDtype::kF32;
};

void write_embeddings(const EmbeddingMatrix& matrix, std::ostream& sink);
EmbeddingMatrix read_embeddings(std::istream& source);

void write_embeddings_file(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings_file(const std::filesystem::path& path);

// Shared with the checkpoint format.
void write_syne_header(const SyneHeader& header, std::ostream& sink);
SyneHeader read_syne_header(std::istream& source);
void write_f64_block(const Matrix& m, std::ostream& sink);
Matrix read_f64_block(std::istream& source);

}  // namespace textcap
