// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "textcap/embedding_store.hpp"
#include "textcap/errors.hpp"

namespace textcap {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'Y', 'N', 'K'};
constexpr std::uint32_t kMaxStringBytes = 256u << 20;

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), b.size());
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw FormatError(FormatErrorKind::kTruncated, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
  const std::uint32_t len = get_u32(in, what);
  if (len > kMaxStringBytes) throw FormatError(FormatErrorKind::kTruncated, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) throw FormatError(FormatErrorKind::kTruncated, what);
  return s;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& sink) {
  sink.write(kMagic.data(), kMagic.size());
  put_u32(sink, kCheckpointVersion);
  put_string(sink, ckpt.metadata_json);
  put_u32(sink, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_string(sink, name);
    write_f64_block(m, sink);
  }
  if (!sink) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& source) {
  std::array<char, 4> magic{};
  source.read(magic.data(), 4);
  if (source.gcount() != 4 || magic != kMagic) {
    throw FormatError(FormatErrorKind::kBadMagic, "expected \"SYNK\"");
  }
  const std::uint32_t version = get_u32(source, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion, "checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata_json = get_string(source, "checkpoint metadata");
  const std::uint32_t count = get_u32(source, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(source, "tensor name");
    ckpt.tensors.emplace_back(std::move(name), read_f64_block(source));
  }
  return ckpt;
}

void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(ckpt, out);
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace textcap
