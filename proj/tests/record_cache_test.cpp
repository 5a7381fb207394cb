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

// C++ standard libraries
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

// external sources
#include <gtest/gtest.h>

// local sources
#include "nkv/record_cache.hpp"
#include "nkv/workload.hpp"

namespace nkv
{
namespace
{
auto
Payload(RecordId id, size_t version = 0) -> std::string
{
  return "rec-" + std::to_string(id) + "-" + std::to_string(version) + std::string(40, 'p');
}

/// Read-through replay: every miss is followed by a put.
auto
ReplayHitRatio(const std::vector<uint64_t> &trace, RecordCacheOptions options) -> double
{
  RecordCache cache{options};
  for (const auto id : trace) {
    if (!cache.Get(id)) cache.Put(id, Payload(id));
  }
  return cache.Stats().HitRatio();
}

TEST(RecordCacheTest, PutThenGet)
{
  RecordCache cache;
  EXPECT_FALSE(cache.Get(7).has_value());
  cache.Put(7, "x");
  EXPECT_EQ(cache.Get(7), std::optional<std::string>{"x"});
  cache.Put(7, "y");
  EXPECT_EQ(cache.Get(7), std::optional<std::string>{"y"});
  cache.Invalidate(7);
  EXPECT_FALSE(cache.Contains(7));
}

TEST(RecordCacheTest, CollidingIdsNeverAnswerForEachOther)
{
  RecordCache cache{RecordCacheOptions{.bucket_count = 64}};
  const RecordId a = 1;
  RecordId b = 2;
  while (cache.BucketOf(b) != cache.BucketOf(a)) ++b;
  cache.Put(a, "record-a");
  cache.Put(b, "record-b");
  EXPECT_FALSE(cache.Get(a).has_value());
  EXPECT_EQ(cache.Get(b), std::optional<std::string>{"record-b"});
  cache.Put(a, "record-a");
  EXPECT_EQ(cache.Get(a), std::optional<std::string>{"record-a"});
  EXPECT_FALSE(cache.Get(b).has_value());
}

TEST(RecordCacheTest, NeverWrongAnswerUnderRandomOps)
{
  RecordCache cache{RecordCacheOptions{.buffer_bytes = 16384, .bucket_count = 32, .cold_window = 50}};
  std::map<RecordId, std::string> last;
  std::mt19937_64 rng{11};
  for (int i = 0; i < 20000; ++i) {
    const RecordId id = rng() % 200;
    switch (rng() % 10) {
      case 0:
        cache.EvictCold();
        break;
      case 1:
      case 2:
      case 3: {
        last[id] = Payload(id, i);
        cache.Put(id, last[id]);
        break;
      }
      default: {
        const auto got = cache.Get(id);
        if (got) {
          ASSERT_TRUE(last.contains(id));
          ASSERT_EQ(*got, last[id]);
        }
      }
    }
  }
}

TEST(RecordCacheTest, OversizedRecordIsRejected)
{
  RecordCache cache{RecordCacheOptions{.buffer_bytes = 1024}};
  EXPECT_THROW(cache.Put(1, std::string(2048, 'x')), CapacityError);
}

TEST(RecordCacheTest, FullBufferEvictsToMakeRoom)
{
  RecordCache cache{RecordCacheOptions{.buffer_bytes = 4096}};
  for (RecordId id = 0; id < 1000; ++id) cache.Put(id, Payload(id));
  EXPECT_EQ(cache.Get(999), std::optional<std::string>{Payload(999)});
  EXPECT_GT(cache.Stats().evictions, 0U);
}

TEST(RecordCacheTest, ColdEvictionKeepsWarmEntriesReachable)
{
  RecordCache cache{RecordCacheOptions{.cold_window = 10}};
  for (RecordId id = 0; id < 20; ++id) cache.Put(id, Payload(id));
  // ids 15..19 were put within the window; touch 3 so it is warm as well
  ASSERT_TRUE(cache.Get(3));
  cache.EvictCold();
  EXPECT_EQ(cache.Get(3), std::optional<std::string>{Payload(3)});
  for (RecordId id = 15; id < 20; ++id) EXPECT_EQ(cache.Get(id), std::optional<std::string>{Payload(id)});
  EXPECT_FALSE(cache.Get(0).has_value());
  EXPECT_FALSE(cache.Get(10).has_value());
}

TEST(RecordCacheTest, UntouchedEntriesAreAllDropped)
{
  RecordCache cache{RecordCacheOptions{.cold_window = 5}};
  for (RecordId id = 0; id < 10; ++id) cache.Put(id, Payload(id));
  for (int i = 0; i < 10; ++i) cache.Get(1000 + i);
  const auto used = cache.Buffer().Used();
  EXPECT_EQ(cache.EvictCold(), used);
  EXPECT_EQ(cache.EntryCount(), 0U);
  for (RecordId id = 0; id < 10; ++id) EXPECT_FALSE(cache.Get(id).has_value());
}

TEST(RecordCacheTest, TouchedEntriesAreAllKept)
{
  RecordCache cache{RecordCacheOptions{.cold_window = 100}};
  for (RecordId id = 0; id < 10; ++id) cache.Put(id, Payload(id));
  EXPECT_EQ(cache.EvictCold(), 0U);
  EXPECT_EQ(cache.EntryCount(), 10U);
  for (RecordId id = 0; id < 10; ++id) EXPECT_EQ(cache.Get(id), std::optional<std::string>{Payload(id)});
}

TEST(RecordCacheTest, CompactionRelocatesKeptEntries)
{
  RecordCache cache{RecordCacheOptions{.cold_window = 4}};
  cache.Put(1, "one");
  cache.Put(2, "two");
  cache.Put(3, "three");
  cache.Put(4, "four");
  cache.Put(5, "five");
  // 1 falls outside the window; 2..5 slide toward the start of the buffer
  cache.EvictCold();
  EXPECT_FALSE(cache.Get(1).has_value());
  EXPECT_EQ(cache.Get(5), std::optional<std::string>{"five"});
  EXPECT_EQ(cache.Get(3), std::optional<std::string>{"three"});
  uint64_t lowest = ~uint64_t{0};
  cache.Buffer().ForEachReleased([&](const EntryInfo &e) { lowest = std::min(lowest, e.offset); });
  EXPECT_EQ(lowest, 0U);
}

TEST(RecordCacheTest, LinksTraverse)
{
  RecordCache cache;
  cache.Put(1, "a");
  cache.Put(2, "b");
  cache.Put(3, "c");
  cache.LinkAttach(1, 0, 2);
  cache.LinkAttach(2, 0, 3);
  cache.LinkAttach(1, 1, 3);
  EXPECT_EQ(cache.LinkTarget(1, 0), std::optional<RecordId>{2});
  EXPECT_EQ(cache.Traverse(1, 0), (std::vector<RecordId>{1, 2, 3}));
  EXPECT_EQ(cache.Traverse(1, 1), (std::vector<RecordId>{1, 3}));
  EXPECT_THROW(cache.LinkAttach(1, 2, 3), std::out_of_range);
  EXPECT_THROW(cache.Traverse(1, 5), std::out_of_range);
}

TEST(RecordCacheTest, LinksVanishWithTheirEntry)
{
  RecordCache cache{RecordCacheOptions{.cold_window = 3}};
  cache.Put(1, "a");
  cache.Put(2, "b");
  cache.Put(3, "c");
  cache.LinkAttach(1, 0, 2);
  cache.LinkAttach(3, 0, 1);
  cache.Get(2);
  cache.Get(3);
  cache.Get(3);
  // 1 is cold now: its outgoing link goes with it, and 3's link to it is cleared
  cache.EvictCold();
  EXPECT_FALSE(cache.Contains(1));
  EXPECT_FALSE(cache.LinkTarget(1, 0).has_value());
  EXPECT_FALSE(cache.LinkTarget(3, 0).has_value());
  EXPECT_EQ(cache.Traverse(3, 0), (std::vector<RecordId>{3}));
}

TEST(RecordCacheTest, RecencyEvictionBeatsRandomOnSkewedTrace)
{
  const auto trace = ZipfTrace(20000, 200000, 0.99, 5);
  RecordCacheOptions options{.buffer_bytes = 64 << 10, .bucket_count = 1 << 16};
  options.policy = EvictionPolicy::kRecency;
  const auto recency = ReplayHitRatio(trace, options);
  options.policy = EvictionPolicy::kRandom;
  const auto random = ReplayHitRatio(trace, options);
  EXPECT_GE(recency, random);
}

TEST(RecordCacheTest, HitRatioGrowsWithCapacity)
{
  const auto trace = ZipfTrace(20000, 100000, 0.99, 9);
  double previous = 0;
  for (const size_t kb : {16, 64, 256, 1024}) {
    const auto ratio = ReplayHitRatio(trace, RecordCacheOptions{.buffer_bytes = kb << 10, .bucket_count = 1 << 16});
    EXPECT_GE(ratio, previous) << kb << " KiB";
    previous = ratio;
  }
  EXPECT_GT(previous, 0.5);
}

}  // namespace
}  // namespace nkv
