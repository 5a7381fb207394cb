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
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// external sources
#include <gtest/gtest.h>

// local sources
#include "nkv/harness.hpp"
#include "nkv/tree.hpp"
#include "step_explorer.hpp"
#include "tree_util.hpp"

namespace nkv::test
{
namespace
{
using harness::Discard;
using harness::HaltAfterNotice;
using sched::Task;

TEST(TreeTest, EmptyTreeGetIsAbsent)
{
  Tree tree{ManualConfig()};
  EXPECT_FALSE(tree.Get("a").has_value());
  EXPECT_TRUE(tree.RangeScan("a", "z").empty());
}

TEST(TreeTest, UpsertThenGet)
{
  Tree tree{ManualConfig()};
  tree.Upsert("a", "1");
  EXPECT_EQ(tree.Get("a"), std::optional<Value>{"1"});
  tree.Upsert("a", "2");
  EXPECT_EQ(tree.Get("a"), std::optional<Value>{"2"});
}

TEST(TreeTest, DeleteHidesKeyAndDeletingAbsentKeyIsHarmless)
{
  Tree tree{ManualConfig()};
  tree.Upsert("a", "1");
  tree.Delete("a");
  EXPECT_FALSE(tree.Get("a").has_value());
  tree.Delete("zz");
  EXPECT_TRUE(tree.Snapshot().empty());
  tree.Upsert("a", "3");
  EXPECT_EQ(tree.Get("a"), std::optional<Value>{"3"});
}

TEST(TreeTest, RangeScanIsHalfOpen)
{
  Tree tree{ManualConfig()};
  for (const auto *k : {"a", "b", "c"}) tree.Upsert(k, std::string{"v"} + k);
  EXPECT_EQ(Keys(tree.RangeScan("a", "c")), (std::vector<Key>{"a", "b"}));
  EXPECT_TRUE(tree.RangeScan("b", "b").empty());
  EXPECT_THROW(tree.RangeScan("c", "a"), InvalidRangeError);
}

TEST(TreeTest, ConfigValidation)
{
  auto bad = [](auto mutate) {
    TreeConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(Tree{bad([](TreeConfig &c) { c.consolidate_threshold = 0; })}, std::invalid_argument);
  EXPECT_THROW(Tree{bad([](TreeConfig &c) { c.split_threshold = 16, c.merge_threshold = 8; })}, std::invalid_argument);
  EXPECT_THROW(Tree{bad([](TreeConfig &c) { c.notice_timeout_epochs = 1; })}, std::invalid_argument);
  EXPECT_NO_THROW(Tree{TreeConfig{}});
}

/*##############################################################################
 * Sequential oracle
 *############################################################################*/

struct OracleRun {
  uint64_t ops{0};
  TreeCounters counters{};
};

auto
RunAgainstOracle(TreeConfig config, uint64_t ops, int keys, uint64_t seed) -> OracleRun
{
  Tree tree{config};
  std::map<Key, Value> oracle;
  std::mt19937_64 rng{seed};
  for (uint64_t i = 0; i < ops; ++i) {
    const auto k = K(static_cast<int>(rng() % static_cast<uint64_t>(keys)));
    switch (rng() % 10) {
      case 0:
      case 1:
      case 2:
      case 3: {
        const auto v = "v" + std::to_string(i);
        tree.Upsert(k, v);
        oracle[k] = v;
        break;
      }
      case 4:
      case 5:
      case 6:
        tree.Delete(k);
        oracle.erase(k);
        break;
      case 7:
      case 8: {
        const auto got = tree.Get(k);
        const auto it = oracle.find(k);
        if (it == oracle.end()) {
          EXPECT_FALSE(got.has_value()) << "op " << i << " get " << k;
        } else {
          EXPECT_EQ(got, std::optional<Value>{it->second}) << "op " << i << " get " << k;
        }
        break;
      }
      default: {
        const auto hi = K(static_cast<int>(rng() % static_cast<uint64_t>(keys + 1)));
        const auto lo = std::min(k, hi);
        const auto got = tree.RangeScan(lo, std::max(k, hi));
        std::vector<Record> expected;
        for (auto it = oracle.lower_bound(lo); it != oracle.end() && it->first < std::max(k, hi); ++it) {
          expected.push_back(Record{it->first, it->second});
        }
        EXPECT_EQ(got, expected) << "op " << i << " scan " << lo;
        break;
      }
    }
    if (::testing::Test::HasFailure()) break;
  }
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  tree.Quiesce();
  EXPECT_EQ(tree.Validate(true), "");
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  return OracleRun{ops, tree.Counters()};
}

TEST(TreeTest, SequentialOracleWithStructureChanges)
{
  TreeConfig c;
  c.consolidate_threshold = 4;
  c.split_threshold = 12;
  c.merge_threshold = 4;
  c.index_split_threshold = 6;
  c.poisoning = true;
  const auto run = RunAgainstOracle(c, 30000, 400, 7);
  EXPECT_GT(run.counters.consolidations, 50U);
  EXPECT_GT(run.counters.splits, 10U);
  EXPECT_GT(run.counters.merges, 5U);
}

TEST(TreeTest, SequentialOracleDefaultConfig)
{
  RunAgainstOracle(TreeConfig{}, 20000, 2000, 3);
}

TEST(TreeTest, ChainLengthBoundAtQuiescence)
{
  TreeConfig c = ManualConfig();
  Tree tree{c};
  for (int i = 0; i < 40; ++i) tree.Upsert(K(i % 5), std::to_string(i));
  tree.Quiesce();
  tree.Table().ForEachLive([&](PageId, const Element *head) {
    ASSERT_NE(head, nullptr);
    EXPECT_LT(ChainLengthOf(head).data_deltas, c.consolidate_threshold);
  });
  EXPECT_EQ(tree.Validate(true), "");
}

/*##############################################################################
 * Consolidation
 *############################################################################*/

TEST(TreeTest, ConsolidateEightDeltas)
{
  Tree tree{ManualConfig()};
  std::map<Key, Value> oracle;
  for (int i = 0; i < 8; ++i) {
    tree.Upsert(K(i % 6), "v" + std::to_string(i));
    oracle[K(i % 6)] = "v" + std::to_string(i);
  }
  const auto pid = tree.LeafOf(K(0));
  EXPECT_EQ(ChainLengthOf(tree.Table().Read(pid)).data_deltas, 8U);
  EXPECT_TRUE(tree.Consolidate(pid));
  const auto *head = tree.Table().Read(pid);
  EXPECT_EQ(ChainLengthOf(head).data_deltas, 0U);
  EXPECT_EQ(ChainLengthOf(head).notices, 0U);
  EXPECT_EQ(ToMap(BaseOf(head)->Records()), oracle);
  EXPECT_EQ(tree.Counters().consolidations, 1U);
}

TEST(TreeTest, UpdateDuringConsolidationLandsAboveNotice)
{
  Tree tree{ManualConfig()};
  for (int i = 0; i < 6; ++i) tree.Upsert(K(i), "old");
  const auto pid = tree.LeafOf(K(0));
  std::vector<Task<void>> tasks;
  tasks.push_back(Discard(tree.ConsolidateTask(pid)));
  testing::StepRunner runner{std::move(tasks)};
  ASSERT_TRUE(runner.StepUntil(0, [&] {
    const auto *n = PendingNotice(tree.Table().Read(pid));
    return n != nullptr && n->Kind() == ElementKind::kCNotice;
  }));
  tree.Upsert(K(2), "new");
  const auto *head = tree.Table().Read(pid);
  EXPECT_EQ(head->Kind(), ElementKind::kUpdate);
  EXPECT_EQ(head->Next()->Kind(), ElementKind::kCNotice);
  EXPECT_EQ(tree.Get(K(2)), std::optional<Value>{"new"});
  runner.RunToEnd(0);
  runner.RethrowErrors();
  EXPECT_EQ(PendingNotice(tree.Table().Read(pid)), nullptr);
  EXPECT_EQ(tree.Get(K(2)), std::optional<Value>{"new"});
  EXPECT_EQ(tree.Get(K(3)), std::optional<Value>{"old"});
}

/// Records the element right below every installed cNOTICE.
class BelowNotice final : public TreeObserver
{
 public:
  void
  OnNoticeInstalled(PageId /*pid*/, const Notice *notice) override
  {
    if (notice->Kind() != ElementKind::kCNotice) return;
    const auto *below = notice->Next();
    if (IsRecordDelta(below->Kind())) keys.push_back(static_cast<const RecordDelta *>(below)->GetKey());
  }
  std::vector<Key> keys;
};

TEST(TreeTest, ConsolidatingWriterPostsTwoElementPrepend)
{
  auto c = ManualConfig();
  c.auto_smo = true;
  c.consolidate_threshold = 4;
  Tree tree{c};
  BelowNotice watch;
  tree.SetObserver(&watch);
  for (int i = 0; i < 4; ++i) tree.Upsert(K(i), "v");
  tree.SetObserver(nullptr);
  // the fourth writer's own delta sits directly below its notice
  EXPECT_EQ(watch.keys, (std::vector<Key>{K(3)}));
  EXPECT_EQ(ChainLengthOf(tree.Table().Read(tree.LeafOf(K(0)))).data_deltas, 0U);
  EXPECT_EQ(tree.Get(K(3)), std::optional<Value>{"v"});
}

/*##############################################################################
 * Takeover of a halted consolidation
 *############################################################################*/

TEST(TreeTest, TakeoverCompletesHaltedConsolidation)
{
  Tree tree{ManualConfig()};
  std::map<Key, Value> oracle;
  for (int i = 0; i < 7; ++i) {
    tree.Upsert(K(i), "v" + std::to_string(i));
    oracle[K(i)] = "v" + std::to_string(i);
  }
  const auto pid = tree.LeafOf(K(0));
  ASSERT_TRUE(HaltAfterNotice(tree, Discard(tree.ConsolidateTask(pid)), ElementKind::kCNotice));
  EXPECT_FALSE(tree.MaybeTakeover(pid)) << "fresh notice";

  // the halted owner blocks nobody
  tree.Upsert(K(9), "late");
  oracle[K(9)] = "late";
  EXPECT_EQ(tree.Get(K(3)), std::optional<Value>{"v3"});

  AdvanceEpochs(tree, 2);
  EXPECT_FALSE(tree.MaybeTakeover(pid)) << "two epochs is below the timeout";
  AdvanceEpochs(tree, 1);
  EXPECT_TRUE(tree.MaybeTakeover(pid));
  const auto *head = tree.Table().Read(pid);
  EXPECT_EQ(PendingNotice(head), nullptr);
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  EXPECT_EQ(tree.Counters().takeovers, 1U);
  EXPECT_EQ(tree.Validate(), "");
}

TEST(TreeTest, WritersTakeOverStaleNoticesOnAccess)
{
  auto c = ManualConfig();
  c.takeover_on_access = true;
  Tree tree{c};
  for (int i = 0; i < 5; ++i) tree.Upsert(K(i), "v");
  const auto pid = tree.LeafOf(K(0));
  ASSERT_TRUE(HaltAfterNotice(tree, Discard(tree.ConsolidateTask(pid)), ElementKind::kCNotice));
  AdvanceEpochs(tree, 3);
  tree.Upsert(K(1), "w");
  EXPECT_EQ(PendingNotice(tree.Table().Read(pid)), nullptr);
  EXPECT_EQ(tree.Counters().takeovers, 1U);
  EXPECT_EQ(tree.Get(K(1)), std::optional<Value>{"w"});
}

TEST(TreeTest, ValidateReportsQuiescentViolations)
{
  Tree tree{ManualConfig()};
  for (int i = 0; i < 5; ++i) tree.Upsert(K(i), "v");
  const auto pid = tree.LeafOf(K(0));
  EXPECT_EQ(tree.Validate(true), "");
  ASSERT_TRUE(HaltAfterNotice(tree, Discard(tree.ConsolidateTask(pid)), ElementKind::kCNotice));
  EXPECT_EQ(tree.Validate(false), "");
  EXPECT_NE(tree.Validate(true), "");
  tree.Quiesce();
  EXPECT_EQ(tree.Validate(true), "");
}

}  // namespace
}  // namespace nkv::test
