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

#ifndef NKV_RECORD_CACHE_HPP
#define NKV_RECORD_CACHE_HPP

// C++ standard libraries
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

// local sources
#include "nkv/log_buffer.hpp"

namespace nkv
{
using RecordId = uint64_t;

enum class EvictionPolicy : uint8_t {
  kRecency,  // drop the least recently touched entries
  kRandom,   // drop a seeded random half (baseline for comparisons)
};

struct RecordCacheOptions {
  size_t buffer_bytes{size_t{1} << 20};
  /// Rounded up to a power of two.
  size_t bucket_count{size_t{1} << 12};
  uint32_t link_slots{2};
  /// Retention window in operations; 0 means twice the buffer capacity in entries.
  uint64_t cold_window{0};
  EvictionPolicy policy{EvictionPolicy::kRecency};
  uint64_t seed{1};
};

struct CacheStats {
  uint64_t hits{0};
  uint64_t misses{0};
  uint64_t puts{0};
  uint64_t evictions{0};
  uint64_t dropped_entries{0};

  [[nodiscard]] auto HitRatio() const -> double
  {
    const auto n = hits + misses;
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
};

/**
 * @brief A lossy hash index from record ids to entries of a log buffer.
 *
 * Each bucket holds one mapping (entry offset + 1); a put overwrites whatever
 * the bucket held, so a colliding id simply misses later. Every entry stores
 * its id, and a get verifies it before answering, so a displaced or stale
 * mapping yields a miss and never another record's bytes.
 *
 * Entries carry `link_slots` embedded links to other entries. Links live and
 * die with their entry and are rewritten by compaction.
 *
 * Get and Put may run concurrently. Eviction takes the cache exclusively.
 */
class RecordCache
{
 public:
  explicit RecordCache(RecordCacheOptions options = {});
  RecordCache(const RecordCache &) = delete;
  auto operator=(const RecordCache &) -> RecordCache & = delete;

  /// Throws CapacityError when the record cannot fit even in an empty buffer.
  void Put(RecordId id, std::string_view record);
  auto Get(RecordId id) -> std::optional<std::string>;

  /// Drops the mapping for @p id, if any.
  void Invalidate(RecordId id);

  /// Compacts away entries untouched during the retention window; returns reclaimed bytes.
  auto EvictCold() -> size_t;

  /// Compacts away about half of the mapped entries according to the policy.
  auto EvictHalf() -> size_t;

  /// Points @p from's link @p slot at @p to. Throws std::out_of_range for a bad slot.
  void LinkAttach(RecordId from, uint32_t slot, RecordId to);
  auto LinkTarget(RecordId from, uint32_t slot) const -> std::optional<RecordId>;

  /// Ids reached from @p from by repeatedly following link @p slot, starting with @p from.
  auto Traverse(RecordId from, uint32_t slot) const -> std::vector<RecordId>;

  [[nodiscard]] auto Contains(RecordId id) const -> bool;
  [[nodiscard]] auto BucketOf(RecordId id) const -> size_t;
  [[nodiscard]] auto BucketCount() const -> size_t { return bucket_count_; }
  [[nodiscard]] auto ColdWindow() const -> uint64_t;
  [[nodiscard]] auto Stats() const -> CacheStats;
  [[nodiscard]] auto Buffer() const -> const LogBuffer & { return buffer_; }
  [[nodiscard]] auto EntryCount() const -> size_t;

 private:
  /// Offset of the verified entry for @p id; requires the lock to be held.
  [[nodiscard]] auto Locate(RecordId id) const -> std::optional<uint64_t>;
  auto CompactKeeping(const std::function<bool(const EntryInfo &)> &keep) -> size_t;

  RecordCacheOptions options_;
  size_t bucket_count_;
  unsigned bucket_shift_;
  std::unique_ptr<std::atomic<uint64_t>[]> buckets_;
  LogBuffer buffer_;
  mutable std::shared_mutex evict_mutex_;
  mutable std::atomic<uint64_t> clock_{0};
  std::atomic<uint64_t> put_bytes_{0};
  uint64_t evict_rounds_{0};

  mutable std::atomic<uint64_t> hits_{0};
  mutable std::atomic<uint64_t> misses_{0};
  std::atomic<uint64_t> puts_{0};
  std::atomic<uint64_t> evictions_{0};
  std::atomic<uint64_t> dropped_{0};
};

}  // namespace nkv

#endif  // NKV_RECORD_CACHE_HPP
