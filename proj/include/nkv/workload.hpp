/*
 * Copyright 2026 The nkv Authors
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

#ifndef NKV_WORKLOAD_HPP
#define NKV_WORKLOAD_HPP

// C++ standard libraries
#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// local sources
#include "nkv/tree.hpp"

namespace nkv
{
class SpecError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ranks in [0, n) with P(rank i) proportional to 1 / (i + 1)^theta; theta = 0 is uniform.
/// Exact for n up to 2^22; larger populations use Gray et al.'s approximate inversion.
class ZipfGenerator
{
 public:
  ZipfGenerator(uint64_t n, double theta, uint64_t seed);

  auto Next() -> uint64_t;
  [[nodiscard]] auto Size() const -> uint64_t { return n_; }
  [[nodiscard]] auto Theta() const -> double { return theta_; }

 private:
  auto Uniform() -> double;

  uint64_t n_;
  double theta_;
  double zetan_{0};
  double alpha_{0};
  double eta_{0};
  double half_pow_theta_{0};
  std::vector<double> cdf_{};
  std::mt19937_64 rng_;
};

/// Fractions of reads, upserts, deletes and scans.
struct OpMix {
  double read{0.5};
  double upsert{0.3};
  double del{0.15};
  double scan{0.05};

  /// "r:u:d:s"; the fractions must be non-negative and sum to 1.
  static auto Parse(const std::string &text) -> OpMix;
};

struct KeyDist {
  double theta{0};  // 0 = uniform

  /// "uniform" or "zipf:THETA" with 0 < THETA < 1.
  static auto Parse(const std::string &text) -> KeyDist;
};

struct WorkloadSpec {
  uint64_t ops{100000};
  unsigned threads{1};
  OpMix mix{};
  uint64_t keys{10000};
  KeyDist dist{};
  uint64_t seed{1};
  size_t scan_length{16};
  TreeConfig tree{};
  /// Share a read-through record cache of this many bytes (0 = none).
  size_t cache_bytes{0};

  void Validate() const;
};

/// Zipf-distributed record ids, e.g. for cache simulations.
auto ZipfTrace(uint64_t ids, uint64_t accesses, double theta, uint64_t seed) -> std::vector<uint64_t>;

/// The key string for a key index.
auto KeyName(uint64_t index) -> Key;

struct RunStats {
  uint64_t ops{0};
  double seconds{0};
  double ops_per_sec{0};
  double cache_hit_ratio{0};
  TreeCounters counters{};
  uint64_t sentinel_touches{0};
  /// Epoch advances and reclaimed objects while the workers ran, before quiescing.
  uint64_t epochs_advanced{0};
  uint64_t reclaimed_during_run{0};
  uint64_t final_keys{0};
  std::vector<std::string> failures;

  [[nodiscard]] auto Ok() const -> bool { return failures.empty(); }
  /// key=value lines.
  [[nodiscard]] auto Format() const -> std::string;
};

/**
 * @brief Runs the workload on real threads, then quiesces and verifies.
 *
 * Every completed write is logged with global counter stamps taken before
 * invocation and after return. A key's final value must come from a write
 * that no other write to the key started after.
 */
auto RunStress(const WorkloadSpec &spec) -> RunStats;

}  // namespace nkv

#endif  // NKV_WORKLOAD_HPP
