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
#include <memory>
#include <optional>
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

auto
Fill(Tree &tree, int lo, int hi) -> std::map<Key, Value>
{
  std::map<Key, Value> oracle;
  for (int i = lo; i <= hi; ++i) {
    tree.Upsert(K(i), "v" + std::to_string(i));
    oracle[K(i)] = "v" + std::to_string(i);
  }
  return oracle;
}

auto
NodeImages(Tree &tree) -> size_t
{
  size_t n = 0;
  tree.Buffer().ForEachReleased([&](const EntryInfo &e) {
    if (e.kind == EntryKind::kNodeImage) ++n;
  });
  return n;
}

/*##############################################################################
 * Split
 *############################################################################*/

TEST(SplitTest, MedianSplitOfTenRecords)
{
  Tree tree{ManualConfig()};
  const auto oracle = Fill(tree, 1, 10);
  const auto o = tree.LeafOf(K(1));
  ASSERT_TRUE(tree.Consolidate(o));
  ASSERT_TRUE(tree.Split(o));
  const auto n = tree.LeafOf(K(10));
  ASSERT_NE(n, o);
  EXPECT_EQ(BaseKeys(tree, o), (std::vector<Key>{K(1), K(2), K(3), K(4), K(5)}));
  EXPECT_EQ(BaseKeys(tree, n), (std::vector<Key>{K(6), K(7), K(8), K(9), K(10)}));
  const auto *ob = BaseOf(tree.Table().Read(o));
  EXPECT_EQ(ob->High(), Bound{K(5)});
  EXPECT_EQ(ob->Side(), n);
  EXPECT_EQ(tree.Height(), 2U);
  EXPECT_EQ(tree.LeafOf(K(5)), o);
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  EXPECT_EQ(tree.Validate(true), "");
  // only the upper half is copied into the new node
  EXPECT_EQ(tree.Counters().records_moved, 5U);
  EXPECT_EQ(NodeImages(tree), 1U);
}

TEST(SplitTest, AccessorsRoutedBySplitKeyWhileHalfDone)
{
  Tree tree{ManualConfig()};
  auto oracle = Fill(tree, 1, 10);
  const auto o = tree.LeafOf(K(1));
  ASSERT_TRUE(tree.Consolidate(o));
  std::vector<Task<void>> tasks;
  tasks.push_back(Discard(tree.SplitTask(o)));
  testing::StepRunner runner{std::move(tasks)};
  const SplitNotice *sn = nullptr;
  ASSERT_TRUE(runner.StepUntil(0, [&] {
    const auto *notice = PendingNotice(tree.Table().Read(o));
    if (notice == nullptr || notice->Kind() != ElementKind::kSNotice) return false;
    sn = static_cast<const SplitNotice *>(notice);
    return true;
  }));
  const auto n = sn->NewPid();
  EXPECT_EQ(sn->SplitKey(), K(5));
  // no data moved yet; both pids share the old state
  EXPECT_EQ(tree.Counters().records_moved, 0U);
  EXPECT_EQ(NodeImages(tree), 0U);
  const auto r8 = SearchChain(tree.Table().Read(o), K(8), ChainContext{o});
  EXPECT_EQ(r8.status, LookupResult::Status::kRedirect);
  EXPECT_EQ(r8.redirect, n);
  EXPECT_EQ(tree.Get(K(8)), std::optional<Value>{"v8"});
  EXPECT_EQ(tree.Get(K(3)), std::optional<Value>{"v3"});

  // an update for the new node lands at N above the notice
  tree.Upsert(K(7), "during");
  oracle[K(7)] = "during";
  EXPECT_EQ(tree.Table().Read(n)->Kind(), ElementKind::kUpdate);
  EXPECT_EQ(tree.Get(K(7)), std::optional<Value>{"during"});
  EXPECT_EQ(tree.Validate(false), "");

  runner.RunToEnd(0);
  runner.RethrowErrors();
  EXPECT_EQ(tree.Get(K(7)), std::optional<Value>{"during"});
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  EXPECT_EQ(tree.Validate(true), "");
}

struct SplitRace {
  std::unique_ptr<Tree> tree;
  PageId o{};
  SplitOutcome out[2]{};
};

auto
Splitter(SplitRace &r, int id) -> Task<void>
{
  auto t = r.tree->SplitTask(r.o);
  r.out[id] = co_await std::move(t);
}

TEST(SplitTest, LoserMovesNoData)
{
  std::unique_ptr<SplitRace> r;
  uint64_t lost = 0;
  const auto runs = testing::ExploreAll(
      [&] {
        r = std::make_unique<SplitRace>();
        r->tree = std::make_unique<Tree>(ManualConfig());
        Fill(*r->tree, 1, 10);
        r->o = r->tree->LeafOf(K(1));
        r->tree->Consolidate(r->o);
        std::vector<Task<void>> tasks;
        tasks.push_back(Splitter(*r, 0));
        tasks.push_back(Splitter(*r, 1));
        return tasks;
      },
      nullptr,
      [&] {
        for (const auto &out : r->out) {
          if (!out.posted) {
            ++lost;
            EXPECT_EQ(out.moved, 0U);
          }
        }
        const auto c = r->tree->Counters();
        EXPECT_EQ(c.records_moved, r->out[0].moved + r->out[1].moved);
        EXPECT_EQ(r->tree->Validate(false), "");
        EXPECT_EQ(r->tree->Snapshot().size(), 10U);
      });
  EXPECT_GT(runs, 1U);
  EXPECT_GT(lost, 0U);
}

TEST(SplitTest, HaltedSplitIsFinishedByTakeover)
{
  Tree reference{ManualConfig()};
  Fill(reference, 1, 10);
  reference.Consolidate(reference.LeafOf(K(1)));
  reference.Split(reference.LeafOf(K(1)));

  Tree tree{ManualConfig()};
  auto oracle = Fill(tree, 1, 10);
  const auto o = tree.LeafOf(K(1));
  tree.Consolidate(o);
  ASSERT_TRUE(HaltAfterNotice(tree, Discard(tree.SplitTask(o)), ElementKind::kSNotice));
  // abandoned before release: no partial split is visible in the buffer
  EXPECT_EQ(NodeImages(tree), 0U);
  EXPECT_FALSE(tree.MaybeTakeover(o));
  tree.Upsert(K(2), "x");
  oracle[K(2)] = "x";
  AdvanceEpochs(tree, 3);
  EXPECT_TRUE(tree.MaybeTakeover(o));
  EXPECT_EQ(NodeImages(tree), 1U);
  EXPECT_EQ(ToMap(tree.Snapshot()), oracle);
  tree.Quiesce();
  EXPECT_EQ(tree.Validate(true), "");
  EXPECT_EQ(BaseKeys(tree, o), BaseKeys(reference, reference.LeafOf(K(1))));
  EXPECT_EQ(BaseKeys(tree, tree.LeafOf(K(10))), BaseKeys(reference, reference.LeafOf(K(10))));
}

/*##############################################################################
 * Merge
 *############################################################################*/

/// L = {1..3}, D = {4, 5} under one parent.
auto
TwoLeaves() -> std::unique_ptr<Tree>
{
  auto tree = std::make_unique<Tree>(ManualConfig());
  Fill(*tree, 1, 5);
  const auto l = tree->LeafOf(K(1));
  tree->Consolidate(l);
  tree->Split(l);
  return tree;
}

TEST(MergeTest, MergesIntoLeftSibling)
{
  auto tree = TwoLeaves();
  const auto l = tree->LeafOf(K(1));
  const auto d = tree->LeafOf(K(4));
  ASSERT_NE(l, d);
  EXPECT_EQ(BaseKeys(*tree, l), (std::vector<Key>{K(1), K(2), K(3)}));
  const auto plan = tree->PlanMergeOf(d);
  ASSERT_TRUE(plan.has_value());
  EXPECT_EQ(plan->left, l);
  EXPECT_EQ(plan->separator, K(3));
  ASSERT_TRUE(tree->Merge(*plan));
  EXPECT_FALSE(tree->Table().IsLive(d));
  EXPECT_EQ(tree->LeafOf(K(4)), l);
  EXPECT_EQ(BaseKeys(*tree, l), (std::vector<Key>{K(1), K(2), K(3), K(4), K(5)}));
  const auto *root = BaseOf(tree->Table().Read(tree->RootPid()));
  EXPECT_EQ(root->Terms().size(), 1U);
  const auto c = tree->Counters();
  EXPECT_EQ(c.mnotice_posts, 1U);
  EXPECT_EQ(c.dnotice_posts, 1U);
  EXPECT_EQ(c.xnotice_posts, 1U);
  EXPECT_EQ(c.merges, 1U);
  tree->Quiesce();
  EXPECT_EQ(tree->Validate(true), "");
  EXPECT_EQ(tree->Snapshot().size(), 5U);
}

TEST(MergeTest, UpdaterAtDyingNodeIsRedirectedLeft)
{
  auto tree = TwoLeaves();
  const auto l = tree->LeafOf(K(1));
  const auto d = tree->LeafOf(K(4));
  const auto plan = *tree->PlanMergeOf(d);
  std::vector<Task<void>> tasks;
  tasks.push_back(Discard(tree->MergeTask(plan)));
  testing::StepRunner runner{std::move(tasks)};
  ASSERT_TRUE(runner.StepUntil(0, [&] {
    const auto *n = PendingNotice(tree->Table().Read(d));
    return n != nullptr && n->Kind() == ElementKind::kDNotice;
  }));
  tree->Upsert(K(4), "redirected");
  const auto *lhead = tree->Table().Read(l);
  ASSERT_TRUE(IsRecordDelta(lhead->Kind()));
  EXPECT_EQ(static_cast<const RecordDelta *>(lhead)->GetKey(), K(4));
  EXPECT_EQ(tree->Get(K(4)), std::optional<Value>{"redirected"});
  EXPECT_EQ(tree->Get(K(5)), std::optional<Value>{"v5"});
  runner.RunToEnd(0);
  runner.RethrowErrors();
  EXPECT_EQ(tree->Get(K(4)), std::optional<Value>{"redirected"});
  tree->Quiesce();
  EXPECT_EQ(tree->Validate(true), "");
  EXPECT_EQ(BaseKeys(*tree, l).size(), 5U);
}

TEST(MergeTest, NoticesPostedInOrder)
{
  class Order final : public TreeObserver
  {
   public:
    void OnNoticeInstalled(PageId /*pid*/, const Notice *n) override { kinds.push_back(n->Kind()); }
    std::vector<ElementKind> kinds;
  } order;
  auto tree = TwoLeaves();
  const auto plan = *tree->PlanMergeOf(tree->LeafOf(K(4)));
  tree->SetObserver(&order);
  tree->Merge(plan);
  tree->SetObserver(nullptr);
  EXPECT_EQ(order.kinds, (std::vector<ElementKind>{ElementKind::kMNotice, ElementKind::kDNotice,
                                                   ElementKind::kXNotice}));
}

TEST(MergeTest, LowestChildIsIneligible)
{
  auto tree = TwoLeaves();
  const auto l = tree->LeafOf(K(1));
  const auto d = tree->LeafOf(K(4));
  EXPECT_FALSE(tree->PlanMergeOf(l).has_value());
  EXPECT_THROW(tree->Merge(MergePlan{tree->RootPid(), l, l, K(1)}), IneligibleMergeError);
  EXPECT_THROW(tree->Merge(MergePlan{tree->RootPid(), l, d, K(2)}), IneligibleMergeError);
  EXPECT_EQ(tree->Counters().mnotice_posts, 0U);
}

TEST(MergeTest, FullNodeIsIneligible)
{
  auto tree = TwoLeaves();
  tree->Upsert(K(6), "v");
  const auto d = tree->LeafOf(K(4));
  EXPECT_THROW(tree->Merge(*tree->PlanMergeOf(d)), IneligibleMergeError);
}

TEST(MergeTest, ParentSplitRefusedWhileMergePending)
{
  auto tree = std::make_unique<Tree>(ManualConfig());
  const auto oracle = Fill(*tree, 1, 9);
  tree->Consolidate(tree->LeafOf(K(1)));
  tree->Split(tree->LeafOf(K(1)));  // {1..5} {6..9}
  tree->Split(tree->LeafOf(K(1)));  // {1..3} {4,5} {6..9}
  const auto d = tree->LeafOf(K(4));
  const auto plan = *tree->PlanMergeOf(d);
  ASSERT_TRUE(HaltAfterNotice(*tree, Discard(tree->MergeTask(plan)), ElementKind::kMNotice));
  const auto root = tree->RootPid();
  EXPECT_EQ(PendingNotice(tree->Table().Read(root))->Kind(), ElementKind::kMNotice);
  EXPECT_FALSE(tree->Split(root));
  EXPECT_EQ(tree->Height(), 2U);
  // searches for D's range route through L meanwhile
  EXPECT_EQ(tree->Get(K(5)), std::optional<Value>{"v5"});
  AdvanceEpochs(*tree, 3);
  EXPECT_TRUE(tree->MaybeTakeover(root));
  EXPECT_TRUE(tree->Split(tree->RootPid()));
  EXPECT_EQ(ToMap(tree->Snapshot()), oracle);
  tree->Quiesce();
  EXPECT_EQ(tree->Validate(true), "");
}

TEST(MergeTest, HaltedMergeIsFinishedByTakeover)
{
  for (const auto kind : {ElementKind::kMNotice, ElementKind::kDNotice, ElementKind::kXNotice}) {
    SCOPED_TRACE(ElementKindName(kind));
    auto tree = TwoLeaves();
    const auto l = tree->LeafOf(K(1));
    const auto d = tree->LeafOf(K(4));
    const auto plan = *tree->PlanMergeOf(d);
    ASSERT_TRUE(HaltAfterNotice(*tree, Discard(tree->MergeTask(plan)), kind));
    const PageId at = kind == ElementKind::kMNotice ? plan.parent : kind == ElementKind::kDNotice ? d : l;
    EXPECT_FALSE(tree->MaybeTakeover(at));
    AdvanceEpochs(*tree, 3);
    EXPECT_TRUE(tree->MaybeTakeover(at));
    EXPECT_FALSE(tree->Table().IsLive(d));
    EXPECT_EQ(BaseKeys(*tree, l).size(), 5U);
    tree->Quiesce();
    EXPECT_EQ(tree->Validate(true), "");
  }
}

TEST(MergeTest, FreedPidIsRecycled)
{
  auto tree = TwoLeaves();
  const auto d = tree->LeafOf(K(4));
  tree->Merge(*tree->PlanMergeOf(d));
  tree->Quiesce();
  AdvanceEpochs(*tree, 3);
  // the next allocation reuses the merged node's pid
  tree->Upsert(K(6), "v");
  tree->Upsert(K(7), "v");
  tree->Upsert(K(8), "v");
  const auto l = tree->LeafOf(K(1));
  tree->Consolidate(l);
  ASSERT_TRUE(tree->Split(l));
  EXPECT_EQ(tree->LeafOf(K(8)), d);
}

}  // namespace
}  // namespace nkv::test
