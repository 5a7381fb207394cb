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

#include "nkv/record_cache.hpp"

#include <algorithm>
#include <bit>
#include <mutex>
#include <stdexcept>
#include <unordered_set>

#include "nkv/contract.hpp"

namespace nkv
{
namespace
{
constexpr uint64_t kFibonacci = 0x9E3779B97F4A7C15ULL;
constexpr int kMaxEvictRounds = 16;

auto
Mix64(uint64_t x) -> uint64_t
{
  x ^= x >> 30U;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27U;
  x *= 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}
}  // namespace

RecordCache::RecordCache(RecordCacheOptions options)
    : options_{options},
      bucket_count_{std::bit_ceil(std::max<size_t>(options.bucket_count, 2))},
      bucket_shift_{static_cast<unsigned>(64 - std::countr_zero(bucket_count_))},
      buckets_{std::make_unique<std::atomic<uint64_t>[]>(bucket_count_)},
      buffer_{options.buffer_bytes}
{
}

auto
RecordCache::BucketOf(RecordId id) const -> size_t
{
  return static_cast<size_t>((id * kFibonacci) >> bucket_shift_);
}

auto
RecordCache::ColdWindow() const -> uint64_t
{
  if (options_.cold_window != 0) return options_.cold_window;
  const auto puts = std::max<uint64_t>(puts_.load(std::memory_order_relaxed), 1);
  const auto mean = std::max<uint64_t>(put_bytes_.load(std::memory_order_relaxed) / puts, 1);
  return 2 * std::max<uint64_t>(buffer_.Capacity() / mean, 1);
}

auto
RecordCache::Locate(RecordId id) const -> std::optional<uint64_t>
{
  const auto v = buckets_[BucketOf(id)].load(std::memory_order_acquire);
  if (v == 0) return std::nullopt;
  const auto info = buffer_.Info(v - 1);
  if (!info.released || info.kind != EntryKind::kRecord || info.id != id) return std::nullopt;
  return v - 1;
}

void
RecordCache::Put(RecordId id, std::string_view record)
{
  const auto need = LogBuffer::Footprint(record.size(), options_.link_slots);
  if (need > buffer_.Capacity()) throw CapacityError{"record larger than the cache buffer"};
  for (int round = 0;; ++round) {
    {
      std::shared_lock lock{evict_mutex_};
      auto ticket = buffer_.TryReserve(record.size(), EntryKind::kRecord, id, options_.link_slots);
      if (ticket) {
        buffer_.SetTouch(ticket->offset, clock_.fetch_add(1, std::memory_order_relaxed) + 1);
        const auto offset = buffer_.WriteAndRelease(*ticket, record);
        buckets_[BucketOf(id)].store(offset + 1, std::memory_order_release);
        puts_.fetch_add(1, std::memory_order_relaxed);
        put_bytes_.fetch_add(need, std::memory_order_relaxed);
        return;
      }
    }
    if (round >= kMaxEvictRounds) throw CapacityError{"cache buffer full"};
    EvictHalf();
  }
}

auto
RecordCache::Get(RecordId id) -> std::optional<std::string>
{
  std::shared_lock lock{evict_mutex_};
  const auto stamp = clock_.fetch_add(1, std::memory_order_relaxed) + 1;
  const auto offset = Locate(id);
  if (!offset) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  buffer_.SetTouch(*offset, stamp);
  hits_.fetch_add(1, std::memory_order_relaxed);
  return std::string{buffer_.Payload(*offset)};
}

void
RecordCache::Invalidate(RecordId id)
{
  std::shared_lock lock{evict_mutex_};
  auto &bucket = buckets_[BucketOf(id)];
  auto v = bucket.load(std::memory_order_acquire);
  if (v != 0 && buffer_.Info(v - 1).id == id) bucket.compare_exchange_strong(v, 0, std::memory_order_acq_rel);
}

auto
RecordCache::Contains(RecordId id) const -> bool
{
  std::shared_lock lock{evict_mutex_};
  return Locate(id).has_value();
}

auto
RecordCache::CompactKeeping(const std::function<bool(const EntryInfo &)> &keep) -> size_t
{
  const auto reclaimed = buffer_.Compact(
      [&](const EntryInfo &e) {
        auto &bucket = buckets_[BucketOf(e.id)];
        const bool mapped = e.kind == EntryKind::kRecord && bucket.load(std::memory_order_relaxed) == e.offset + 1;
        if (!mapped) return false;
        if (keep(e)) return true;
        bucket.store(0, std::memory_order_relaxed);
        dropped_.fetch_add(1, std::memory_order_relaxed);
        return false;
      },
      [&](uint64_t from, uint64_t to) {
        auto &bucket = buckets_[BucketOf(buffer_.Info(to).id)];
        if (bucket.load(std::memory_order_relaxed) == from + 1) bucket.store(to + 1, std::memory_order_relaxed);
      });
  evictions_.fetch_add(1, std::memory_order_relaxed);
  return reclaimed;
}

auto
RecordCache::EvictCold() -> size_t
{
  std::unique_lock lock{evict_mutex_};
  const auto now = clock_.load(std::memory_order_relaxed);
  const auto window = ColdWindow();
  return CompactKeeping([&](const EntryInfo &e) { return buffer_.Touch(e.offset) + window > now; });
}

auto
RecordCache::EvictHalf() -> size_t
{
  std::unique_lock lock{evict_mutex_};
  ++evict_rounds_;
  if (options_.policy == EvictionPolicy::kRandom) {
    const auto salt = Mix64(options_.seed ^ (evict_rounds_ * kFibonacci));
    return CompactKeeping([&](const EntryInfo &e) { return (Mix64(e.id ^ salt) & 1U) != 0; });
  }
  std::vector<uint64_t> stamps;
  buffer_.ForEachReleased([&](const EntryInfo &e) {
    if (Locate(e.id) == e.offset) stamps.push_back(buffer_.Touch(e.offset));
  });
  if (stamps.empty()) return CompactKeeping([](const EntryInfo &) { return false; });
  const auto mid = stamps.begin() + static_cast<std::ptrdiff_t>((stamps.size() - 1) / 2);
  std::nth_element(stamps.begin(), mid, stamps.end());
  const auto cut = *mid;
  return CompactKeeping([&](const EntryInfo &e) { return buffer_.Touch(e.offset) > cut; });
}

void
RecordCache::LinkAttach(RecordId from, uint32_t slot, RecordId to)
{
  if (slot >= options_.link_slots) throw std::out_of_range{"link slot out of range"};
  std::shared_lock lock{evict_mutex_};
  const auto src = Locate(from);
  if (!src) throw std::invalid_argument{"link source is not cached"};
  const auto dst = Locate(to);
  NKV_CONTRACT(dst.has_value(), "link to an entry that is not cached");
  if (!dst) throw std::invalid_argument{"link target is not cached"};
  buffer_.SetLinkWord(*src, slot, *dst + 1);
}

auto
RecordCache::LinkTarget(RecordId from, uint32_t slot) const -> std::optional<RecordId>
{
  if (slot >= options_.link_slots) throw std::out_of_range{"link slot out of range"};
  std::shared_lock lock{evict_mutex_};
  const auto src = Locate(from);
  if (!src) return std::nullopt;
  const auto w = buffer_.LinkWord(*src, slot);
  if (w == 0) return std::nullopt;
  return buffer_.Info(w - 1).id;
}

auto
RecordCache::Traverse(RecordId from, uint32_t slot) const -> std::vector<RecordId>
{
  if (slot >= options_.link_slots) throw std::out_of_range{"link slot out of range"};
  std::shared_lock lock{evict_mutex_};
  std::vector<RecordId> path;
  auto at = Locate(from);
  std::unordered_set<uint64_t> seen;
  while (at && seen.insert(*at).second) {
    path.push_back(buffer_.Info(*at).id);
    const auto w = buffer_.LinkWord(*at, slot);
    if (w == 0) break;
    at = w - 1;
  }
  return path;
}

auto
RecordCache::Stats() const -> CacheStats
{
  return CacheStats{hits_.load(std::memory_order_relaxed), misses_.load(std::memory_order_relaxed),
                    puts_.load(std::memory_order_relaxed), evictions_.load(std::memory_order_relaxed),
                    dropped_.load(std::memory_order_relaxed)};
}

auto
RecordCache::EntryCount() const -> size_t
{
  std::shared_lock lock{evict_mutex_};
  size_t n = 0;
  buffer_.ForEachReleased([&](const EntryInfo &e) {
    if (Locate(e.id) == e.offset) ++n;
  });
  return n;
}

}  // namespace nkv
