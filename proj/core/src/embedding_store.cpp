// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/embedding_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "textcap/errors.hpp"

namespace textcap {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic:
      return "bad magic";
    case FormatErrorKind::kUnsupportedVersion:
      return "unsupported version";
    case FormatErrorKind::kUnsupportedDtype:
      return "unsupported dtype";
    case FormatErrorKind::kTruncated:
      return "truncated payload";
    case FormatErrorKind::kNonFinite:
      return "non-finite value";
  }
  return "format error";
}

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'Y', 'N', 'E'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), b.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void check_sink(const std::ostream& out) {
  if (!out) throw IoError("write failed");
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw ValidationError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(v);
}

void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(FormatErrorKind::kTruncated,
                      std::string(what) + ": expected " + std::to_string(n) + " bytes, got " +
                          std::to_string(in.gcount()));
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) {
    throw ValidationError("embedding data length " + std::to_string(data_.size()) +
                          " != rows*dim " + std::to_string(rows_ * dim_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError(FormatErrorKind::kNonFinite,
                        "row " + std::to_string(i / std::max<std::size_t>(dim_, 1)) + " col " +
                            std::to_string(i % std::max<std::size_t>(dim_, 1)));
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::from_matrix(const Matrix& m) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    }
  }
  return EmbeddingMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                         std::move(data));
}

Matrix EmbeddingMatrix::to_matrix() const {
  Matrix m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < data_.size(); ++i) m.data()[i] = static_cast<double>(data_[i]);
  return m;
}

std::span<const float> EmbeddingMatrix::row(std::size_t i) const {
  if (i >= rows_) throw ValidationError("row index " + std::to_string(i) + " out of range");
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

void EmbeddingMatrix::set_row(std::size_t i, std::span<const double> values) {
  if (i >= rows_) throw ValidationError("row index " + std::to_string(i) + " out of range");
  if (values.size() != dim_) throw ValidationError("row length does not match dim");
  for (std::size_t j = 0; j < dim_; ++j) {
    const auto f = static_cast<float>(values[j]);
    if (!std::isfinite(f)) throw FormatError(FormatErrorKind::kNonFinite, "set_row");
    data_[i * dim_ + j] = f;
  }
}

void write_syne_header(const SyneHeader& header, std::ostream& sink) {
  sink.write(kMagic.data(), kMagic.size());
  put_u32(sink, kSyneVersion);
  put_u32(sink, header.rows);
  put_u32(sink, header.dim);
  const char dtype = static_cast<char>(header.dtype);
  sink.write(&dtype, 1);
  check_sink(sink);
}

SyneHeader read_syne_header(std::istream& source) {
  std::array<unsigned char, kSyneHeaderSize> buf{};
  source.read(reinterpret_cast<char*>(buf.data()), 4);
  if (source.gcount() != 4 || std::memcmp(buf.data(), kMagic.data(), 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "expected \"SYNE\"");
  }
  read_exact(source, buf.data() + 4, kSyneHeaderSize - 4, "header");
  const std::uint32_t version = get_u32(buf.data() + 4);
  if (version != kSyneVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion, "version " + std::to_string(version));
  }
  SyneHeader header;
  header.rows = get_u32(buf.data() + 8);
  header.dim = get_u32(buf.data() + 12);
  const std::uint8_t dtype = buf[16];
  if (dtype > static_cast<std::uint8_t>(SyneDtype::kF64)) {
    throw FormatError(FormatErrorKind::kUnsupportedDtype, "dtype " + std::to_string(dtype));
  }
  header.dtype = static_cast<SyneDtype>(dtype);
  return header;
}

void write_embeddings(const EmbeddingMatrix& matrix, std::ostream& sink) {
  write_syne_header({checked_u32(matrix.rows(), "rows"), checked_u32(matrix.dim(), "dim"),
                     SyneDtype::kF32},
                    sink);
  for (float f : matrix.data()) put_u32(sink, std::bit_cast<std::uint32_t>(f));
  check_sink(sink);
}

EmbeddingMatrix read_embeddings(std::istream& source) {
  const SyneHeader header = read_syne_header(source);
  if (header.dtype != SyneDtype::kF32) {
    throw FormatError(FormatErrorKind::kUnsupportedDtype,
                      "embeddings must be f32 (dtype 0), got " +
                          std::to_string(static_cast<int>(header.dtype)));
  }
  const std::size_t count = static_cast<std::size_t>(header.rows) * header.dim;
  std::vector<unsigned char> bytes(count * 4);
  read_exact(source, bytes.data(), bytes.size(), "payload");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
  }
  return EmbeddingMatrix(header.rows, header.dim, std::move(data));
}

void write_f64_block(const Matrix& m, std::ostream& sink) {
  write_syne_header({checked_u32(static_cast<std::size_t>(m.rows()), "rows"),
                     checked_u32(static_cast<std::size_t>(m.cols()), "dim"), SyneDtype::kF64},
                    sink);
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(sink, std::bit_cast<std::uint64_t>(m.data()[i]));
  check_sink(sink);
}

Matrix read_f64_block(std::istream& source) {
  const SyneHeader header = read_syne_header(source);
  if (header.dtype != SyneDtype::kF64) {
    throw FormatError(FormatErrorKind::kUnsupportedDtype, "tensor block must be f64 (dtype 1)");
  }
  const std::size_t count = static_cast<std::size_t>(header.rows) * header.dim;
  std::vector<unsigned char> bytes(count * 8);
  read_exact(source, bytes.data(), bytes.size(), "tensor payload");
  Matrix m(header.rows, header.dim);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = std::bit_cast<double>(get_u64(bytes.data() + 8 * i));
    if (!std::isfinite(v)) throw FormatError(FormatErrorKind::kNonFinite, "tensor block");
    m.data()[i] = v;
  }
  return m;
}

void write_embeddings_file(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_embeddings(matrix, out);
}

EmbeddingMatrix read_embeddings_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_embeddings(in);
}

}  // namespace textcap
