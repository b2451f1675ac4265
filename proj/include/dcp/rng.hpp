/*
 * Copyright 2026 The dcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DCP_RNG_HPP_
#define DCP_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace dcp {

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed for an independent stream identified by (master seed, stage, index).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ fnv1a(stage)) + splitmix64(index));
}

// Maps 64 random bits to a double in [0, 1) with 53-bit resolution.
constexpr double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based uniform draw: same (seed, key, lane) always gives the same value.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t key,
                                 std::uint64_t lane = 0) {
  return to_unit_interval(
      splitmix64(splitmix64(seed) ^ splitmix64(key * 4 + lane + 1)));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::string_view stage,
                          std::uint64_t index = 0) {
  return Engine(derive_seed(master, stage, index));
}

}  // namespace dcp

#endif  // DCP_RNG_HPP_
