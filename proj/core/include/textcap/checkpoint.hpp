// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "textcap/tensor.hpp"

namespace textcap {

// Checkpoint container, little-endian:
//   "SYNK" | u32 version=1 | u32 json_len | json metadata
//   | u32 tensor_count | { u32 name_len | name | SYNE f64 block }*
// Metadata is kept as the exact bytes read, so read -> write is byte-exact.
struct Checkpoint {
  std::string metadata_json;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const Checkpoint& ckpt, std::ostream& sink);
Checkpoint read_checkpoint(std::istream& source);
void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

}  // namespace textcap
