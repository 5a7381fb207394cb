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

#include "nkv/scenarios.hpp"

// C++ standard libraries
#include <ostream>
#include <string>

namespace nkv::harness
{
namespace
{
using sched::Site;
using sched::SiteBit;

auto
K(int i) -> Key
{
  auto digits = std::to_string(i);
  if (digits.size() < 2) digits.insert(0, "0");
  return "k" + digits;
}

auto
Preload(int n) -> std::vector<std::pair<Key, Value>>
{
  std::vector<std::pair<Key, Value>> out;
  for (int i = 1; i <= n; ++i) out.emplace_back(K(i), "v" + std::to_string(i));
  return out;
}

void
ConsolidateAll(Tree &tree)
{
  std::vector<PageId> pids;
  tree.Table().ForEachLive([&](PageId pid, const Element *head) {
    if (head != nullptr) pids.push_back(pid);
  });
  for (const auto pid : pids) tree.Consolidate(pid);
}

/// Leaves k01-k03 | k04-k06 under one root; the right leaf is underfull.
void
TwoLeaves(Tree &tree)
{
  ConsolidateAll(tree);
  tree.Split(tree.LeafOf(K(1)));
  ConsolidateAll(tree);
}

/// Leaves k01-k03 | k04-k05 | k06-k09 under one root.
void
ThreeLeaves(Tree &tree)
{
  ConsolidateAll(tree);
  tree.Split(tree.LeafOf(K(1)));
  tree.Split(tree.LeafOf(K(1)));
  ConsolidateAll(tree);
}

constexpr uint32_t kNoGuardSites = sched::kAllSites & ~SiteBit(Site::kGuardEnter);
constexpr uint32_t kFixedRootSites = kNoGuardSites & ~SiteBit(Site::kRootRead);

/// When the helper at @p machine managed all three advances, nothing may remain pending.
auto
SettledAfterAdvances(size_t machine) -> std::function<std::string(const RunView &)>
{
  return [machine](const RunView &view) -> std::string {
    const auto &advance = view.results[machine][0];
    if (!advance.returned || advance.number < 3) return {};
    std::string pending;
    view.tree.Table().ForEachLive([&](PageId pid, const Element *head) {
      if (head == nullptr) return;
      if (const auto *n = PendingNotice(head); n != nullptr) {
        pending += " " + std::string{ElementKindName(n->Kind())} + "@" + std::to_string(pid.index);
      }
    });
    return pending.empty() ? std::string{} : "notices still pending after three advances:" + pending;
  };
}

auto
Machine(std::string name, std::vector<Op> ops) -> MachineDef
{
  return MachineDef{std::move(name), std::move(ops), std::nullopt};
}
}  // namespace

auto
ScenarioConfig() -> TreeConfig
{
  TreeConfig c;
  c.consolidate_threshold = 8;
  c.split_threshold = 9;
  c.merge_threshold = 4;
  c.index_split_threshold = 4;
  c.notice_timeout_epochs = 3;
  c.auto_smo = false;
  c.takeover_on_access = true;
  c.table_capacity = 64;
  c.buffer_bytes = size_t{1} << 16;
  c.poisoning = true;
  return c;
}

auto
ScenarioLibrary() -> std::vector<ScenarioDef>
{
  std::vector<ScenarioDef> lib;
  const auto cfg = ScenarioConfig();

  // two consolidators race for the cNOTICE while an updater prepends
  {
    ScenarioDef s{.name = "cnotice_race", .config = cfg, .preload = Preload(3)};
    s.machines = {Machine("c1", {ConsolidateOp(K(1))}), Machine("c2", {ConsolidateOp(K(1))}),
                  Machine("u", {UpsertOp(K(2), "w2")})};
    s.site_mask = kFixedRootSites;
    lib.push_back(std::move(s));
  }

  // a leaf split (reserve, notices at both pids, rebuilds, root growth) against one client
  const auto split_case = [&](std::string name, MachineDef other, bool static_keys) {
    ScenarioDef s{.name = std::move(name), .config = cfg, .preload = Preload(6), .setup = ConsolidateAll};
    s.machines = {Machine("s", {SplitOp(K(1))}), std::move(other)};
    s.site_mask = kNoGuardSites;
    s.static_keys = static_keys;
    lib.push_back(std::move(s));
  };
  split_case("split_vs_upsert_moving", Machine("u", {UpsertOp(K(5), "w5")}), false);
  split_case("split_vs_upsert_staying", Machine("u", {UpsertOp(K(2), "w2")}), false);
  split_case("split_vs_insert", Machine("u", {UpsertOp(K(7), "w7")}), false);
  split_case("split_vs_delete", Machine("u", {DeleteOp(K(4))}), false);
  split_case("split_vs_get", Machine("g", {GetOp(K(5))}), true);
  split_case("split_vs_scan", Machine("r", {ScanOp(K(2), K(6))}), true);
  split_case("split_race", Machine("s2", {SplitOp(K(1))}), true);

  // merge of k04-k06 into k01-k03 against an updater of the dying node
  const auto merge_case = [&](std::string name, MachineDef other, bool static_keys) {
    ScenarioDef s{.name = std::move(name), .config = cfg, .preload = Preload(6), .setup = TwoLeaves};
    s.machines = {Machine("m", {MergeOp(K(5))}), std::move(other)};
    s.site_mask = kFixedRootSites;
    s.static_keys = static_keys;
    lib.push_back(std::move(s));
  };
  merge_case("merge_vs_upsert", Machine("u", {UpsertOp(K(5), "w5")}), false);
  merge_case("merge_vs_delete", Machine("u", {DeleteOp(K(4))}), false);
  merge_case("merge_vs_insert", Machine("u", {UpsertOp(K(7), "w7")}), false);
  merge_case("merge_vs_get", Machine("g", {GetOp(K(6))}), true);
  merge_case("merge_vs_scan", Machine("r", {ScanOp(K(3), K(7))}), true);

  // the parent of a pending merge is asked to split
  {
    auto config = cfg;
    config.takeover_on_access = false;  // only the helper completes the merge
    ScenarioDef s{.name = "parent_split_vs_pending_merge", .config = config, .preload = Preload(9)};
    s.setup = [](Tree &tree) {
      ThreeLeaves(tree);
      const auto plan = tree.PlanMergeOf(tree.LeafOf(K(4)));
      if (!plan) throw std::logic_error{"no merge plan for the middle leaf"};
      HaltAfterNotice(tree, Discard(tree.MergeTask(*plan)), ElementKind::kMNotice);
    };
    s.machines = {Machine("p", {SplitOp(K(1), 1)}), Machine("t", {AdvanceOp(3), TakeoverOp(ElementKind::kMNotice)})};
    s.final_check = SettledAfterAdvances(1);
    lib.push_back(std::move(s));
  }

  // the owner of a notice dies; a helper takes over once the notice is stale
  const auto takeover_case = [&](std::string name, int preload, std::function<void(Tree &)> setup, Key key,
                                 ElementKind kind, uint32_t mask, bool on_access) {
    auto config = cfg;
    config.takeover_on_access = on_access;
    ScenarioDef s{.name = std::move(name), .config = config, .preload = Preload(preload), .setup = std::move(setup)};
    s.machines = {Machine("u", {UpsertOp(key, "w")}), Machine("t", {AdvanceOp(3), TakeoverOp(kind)})};
    s.site_mask = mask;
    s.final_check = SettledAfterAdvances(1);
    lib.push_back(std::move(s));
  };
  takeover_case(
      "takeover_consolidation", 3,
      [](Tree &tree) {
        HaltAfterNotice(tree, Discard(tree.ConsolidateTask(tree.LeafOf(K(1)))), ElementKind::kCNotice);
      },
      K(2), ElementKind::kCNotice, sched::kAllSites, true);
  takeover_case(
      "takeover_split", 6,
      [](Tree &tree) {
        ConsolidateAll(tree);
        HaltAfterNotice(tree, Discard(tree.SplitTask(tree.LeafOf(K(1)))), ElementKind::kSNotice);
      },
      K(5), ElementKind::kSNotice, sched::kAllSites, true);
  takeover_case(
      "takeover_merge", 6,
      [](Tree &tree) {
        TwoLeaves(tree);
        const auto plan = tree.PlanMergeOf(tree.LeafOf(K(5)));
        if (!plan) throw std::logic_error{"no merge plan for the right leaf"};
        HaltAfterNotice(tree, Discard(tree.MergeTask(*plan)), ElementKind::kDNotice);
      },
      K(5), ElementKind::kDNotice, sched::kAllSites, false);

  // two reservations never overlap
  {
    ScenarioDef s{.name = "reserve_race", .config = cfg};
    s.machines = {Machine("a", {ReserveOp(100)}), Machine("b", {ReserveOp(100)})};
    lib.push_back(std::move(s));
  }
  return lib;
}

auto
FindScenario(std::string_view name) -> std::optional<ScenarioDef>
{
  for (auto &s : ScenarioLibrary()) {
    if (s.name == name) return std::move(s);
  }
  return std::nullopt;
}

auto
RunLibrary(const std::vector<ScenarioDef> &scenarios, const Options &options, std::ostream &out) -> int
{
  if (scenarios.empty()) {
    out << "0 scenarios\n";
    return 0;
  }
  int failed = 0;
  for (const auto &s : scenarios) {
    try {
      const auto report = ExploreExhaustive(s, options);
      out << report.Format();
      if (!report.Ok()) ++failed;
    } catch (const std::exception &e) {
      out << "scenario " << s.name << ": error: " << e.what() << "\n";
      ++failed;
    }
  }
  out << scenarios.size() << " scenarios, " << failed << " failed\n";
  return failed;
}

}  // namespace nkv::harness
