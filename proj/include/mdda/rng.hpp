/*
 * Copyright 2026 The mdda-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <limits>

namespace mdda {

/// xoshiro256** seeded through splitmix64.
///
/// Distribution helpers are written out here instead of using <random>
/// distributions, whose output differs between standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  result_type operator()() { return next(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; one draw per call (the sine branch is discarded).
  double normal();
  /// Uniform integer in [0, n), n > 0, unbiased by rejection.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Independent child stream. Advances this generator by one draw.
  Rng fork(std::uint64_t tag);

 private:
  std::uint64_t s_[4];
};

/// Fixed stream tags for per-purpose splitting.
namespace stream {
inline constexpr std::uint64_t kData = 0x64617461;     // "data"
inline constexpr std::uint64_t kInit = 0x696e6974;     // "init"
inline constexpr std::uint64_t kBatch = 0x62617463;    // "batc"
inline constexpr std::uint64_t kPenalty = 0x70656e61;  // "pena"
}  // namespace stream

}  // namespace mdda
