/*
 * Copyright 2026 The sdefit Authors
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
#ifndef SDEFIT_RNG_HPP
#define SDEFIT_RNG_HPP

#include <cstdint>
#include <random>

namespace sdefit {

/// Named sub-streams of a simulation seed. Keeping Brownian increments,
/// perturbation draws and measurement noise on separate streams is what makes
/// common-random-number pairs line up: a plan that consumes extra perturbation
/// draws does not shift the Brownian stream of its partner.
enum class RngStream : std::uint64_t {
  brownian = 0,
  perturbation = 1,
  measurement = 2,
  optimizer = 3,
  deletion = 4,
};

namespace detail {
// SplitMix64 finalizer; used purely as a mixing function for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic seed for a (master, replicate, stream, attempt) cell.
/// Every replicate owns its own generators, so results do not depend on how
/// replicates are scheduled across worker threads.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate,
                                 RngStream stream, std::uint64_t attempt = 0) {
  std::uint64_t s = detail::mix64(master);
  s = detail::mix64(s ^ (replicate * 0xd1342543de82ef95ULL + 1));
  s = detail::mix64(s ^ (static_cast<std::uint64_t>(stream) * 0xaf251af3b0f025b5ULL + 2));
  s = detail::mix64(s ^ (attempt * 0x9e3779b97f4a7c15ULL + 3));
  return s;
}

/// Seed handed to one replicate's SimulationPlan. Attempts count restarts of
/// prematurely ended epidemics; a fresh attempt gets fresh streams.
inline std::uint64_t derive_replicate_seed(std::uint64_t master, std::uint64_t replicate,
                                           std::uint64_t attempt = 0) {
  std::uint64_t s = detail::mix64(master ^ 0x517cc1b727220a95ULL);
  s = detail::mix64(s ^ (replicate * 0x2545f4914f6cdd1dULL + 11));
  s = detail::mix64(s ^ (attempt * 0x9e3779b97f4a7c15ULL + 13));
  return s;
}

/// One independent Gaussian/uniform stream.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sdefit

#endif  // SDEFIT_RNG_HPP
