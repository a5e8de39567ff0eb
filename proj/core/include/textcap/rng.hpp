// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace textcap {

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Vigna's splitmix64. Every random stream in the library derives from this.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Top 24 bits mapped to [-1, 1).
  constexpr double next_signed_unit() noexcept {
    const auto u = static_cast<double>(next() >> 40);
    return u / 8388608.0 - 1.0;
  }

  // 53-bit uniform in [0, 1).
  constexpr double next_uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Box-Muller over a splitmix64 stream; emits both variates of each pair.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) noexcept : rng_(seed) {}

  double next() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - rng_.next_uniform();  // (0, 1]
    const double u2 = rng_.next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named sub-seed: mixes a label into a master seed so independent stages
// (refine shuffle, decoder init, dropout, ...) never share a stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept {
  SplitMix64 mix(master ^ fnv1a64(label));
  return mix.next();
}

}  // namespace textcap
