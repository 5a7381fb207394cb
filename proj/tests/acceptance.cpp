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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

// local sources
#include "nkv/cost_model.hpp"
#include "nkv/harness.hpp"
#include "nkv/scenarios.hpp"
#include "nkv/tree.hpp"
#include "nkv/workload.hpp"

/**
 * One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
 */
namespace
{
using namespace nkv;  // NOLINT

struct Outcome {
  bool pass{false};
  std::string detail;
};

int failures = 0;

void
Report(const char *id, const std::function<Outcome()> &check)
{
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = check();
  } catch (const std::exception &e) {
    out = Outcome{false, std::string{"exception: "} + e.what()};
  }
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s %s (%.1fs) %s\n", out.pass ? "PASS" : "FAIL", id, secs, out.detail.c_str());
  std::fflush(stdout);
}

auto
RelErr(double got, double want) -> double
{
  return std::abs(got - want) / std::abs(want);
}

auto
K(int i) -> Key
{
  auto digits = std::to_string(i);
  if (digits.size() < 2) digits.insert(0, "0");
  return "k" + digits;
}

/*##############################################################################
 * 1-3: cost model
 *############################################################################*/

auto
CostAnchors() -> Outcome
{
  const auto p = cost::CostParams::Load(NKV_SOURCE_DIR "/config/cost_params.conf");
  const auto t4096 = cost::BreakEvenInterval(p, 4096);
  const auto t_tenth = cost::BreakEvenInterval(p, 409.6);
  std::ostringstream d;
  d << "T(4096)=" << t4096 << "s T(409.6)=" << t_tenth << "s";
  return {RelErr(t4096, 45) <= 0.01 && RelErr(t_tenth, 10 * t4096) <= 1e-12, d.str()};
}

auto
CostCurves() -> Outcome
{
  const cost::CostParams p{};
  const auto b2048 = cost::BoundaryRop(p, 2048);
  const auto b4096 = cost::BoundaryRop(p, 4096);
  bool regions = true;
  const auto rows = cost::CrossoverCurves(p, {4096, 2048}, cost::RopGrid(1e-4, 1, 200));
  for (const auto &r : rows) {
    const auto boundary = cost::BoundaryRop(p, r.size_bytes);
    if (r.rop > boundary && !r.mem_cheaper) regions = false;
    if (r.rop < boundary && r.mem_cheaper) regions = false;
  }
  std::ostringstream csv;
  cost::WriteCurvesCsv(csv, rows);
  const bool both = csv.str().find(",mem\n") != std::string::npos && csv.str().find(",ssd\n") != std::string::npos;
  std::ostringstream d;
  d << "boundary(2048)/boundary(4096)=" << b2048 / b4096;
  return {RelErr(b2048, b4096 / 2) <= 1e-12 && regions && both, d.str()};
}

auto
RecordVsPage() -> Outcome
{
  constexpr uint64_t kIds = 100000;
  constexpr size_t kRecord = 400;
  const auto trace = ZipfTrace(kIds, 1000000, 0.99, 1);
  const size_t budget = kIds * kRecord / 10;
  const auto record = cost::SimulateHitRatio(trace, cost::Granularity{cost::Granularity::Kind::kRecord, kRecord, 1},
                                             budget);
  const auto page = cost::SimulateHitRatio(
      trace, cost::Granularity{cost::Granularity::Kind::kPage, kRecord * 10, 10}, budget);
  std::ostringstream d;
  d << "record=" << record << " page=" << page;
  return {record > page, d.str()};
}

/*##############################################################################
 * 4: sequential oracle
 *############################################################################*/

auto
SequentialOracle() -> Outcome
{
  TreeConfig c;
  c.consolidate_threshold = 4;
  c.split_threshold = 12;
  c.merge_threshold = 4;
  c.index_split_threshold = 6;
  c.poisoning = true;
  Tree tree{c};
  std::map<Key, Value> oracle;
  std::mt19937_64 rng{2026};
  const auto key = [&] { return KeyName(rng() % 1000); };
  uint64_t mismatches = 0;
  std::string first;
  for (int i = 0; i < 100000; ++i) {
    const auto roll = rng() % 100;
    if (roll < 40) {
      const auto k = key();
      const auto v = "v" + std::to_string(i);
      tree.Upsert(k, v);
      oracle[k] = v;
    } else if (roll < 70) {
      const auto k = key();
      tree.Delete(k);
      oracle.erase(k);
    } else if (roll < 90) {
      const auto k = key();
      const auto got = tree.Get(k);
      const auto it = oracle.find(k);
      const std::optional<Value> want = it == oracle.end() ? std::nullopt : std::optional<Value>{it->second};
      if (got != want && mismatches++ == 0) first = "get " + k + " at op " + std::to_string(i);
    } else {
      auto lo = key();
      auto hi = key();
      if (hi < lo) std::swap(lo, hi);
      const auto got = tree.RangeScan(lo, hi);
      std::vector<Record> want;
      for (auto it = oracle.lower_bound(lo); it != oracle.end() && it->first < hi; ++it) {
        want.push_back(Record{it->first, it->second});
      }
      if (got != want && mismatches++ == 0) first = "scan " + lo + ".." + hi + " at op " + std::to_string(i);
    }
  }
  const auto snapshot = tree.Snapshot();
  std::vector<Record> want;
  for (const auto &[k, v] : oracle) want.push_back(Record{k, v});
  const bool same = snapshot == want;
  const auto cnt = tree.Counters();
  tree.Quiesce();
  const auto valid = tree.Validate(true);
  std::ostringstream d;
  d << "consolidations=" << cnt.consolidations << " splits=" << cnt.splits << " merges=" << cnt.merges
    << " mismatches=" << mismatches << (first.empty() ? "" : " first=" + first)
    << (valid.empty() ? "" : " validate: " + valid);
  return {mismatches == 0 && same && valid.empty() && cnt.consolidations >= 50 && cnt.splits >= 10 &&
              cnt.merges >= 5,
          d.str()};
}

/*##############################################################################
 * 5-6: interleavings and takeover
 *############################################################################*/

auto
ScenarioLibraryClean() -> Outcome
{
  uint64_t schedules = 0;
  std::string bad;
  for (const auto &s : harness::ScenarioLibrary()) {
    const auto r = harness::ExploreExhaustive(s);
    schedules += r.schedules;
    if (!r.Ok()) bad += " " + s.name;
  }
  return {bad.empty(), "schedules=" + std::to_string(schedules) + (bad.empty() ? "" : " violated:" + bad)};
}

/// Builds the same state twice, halting the owner of @p kind in one copy only.
auto
HaltedVersusUninterrupted(const std::string &what,
                          int preload,
                          const std::function<void(Tree &)> &prepare,
                          const std::function<sched::Task<void>(Tree &)> &make,
                          ElementKind kind) -> std::string
{
  auto config = harness::ScenarioConfig();
  config.takeover_on_access = false;
  Tree reference{config};
  Tree tree{config};
  for (Tree *t : {&reference, &tree}) {
    for (int i = 1; i <= preload; ++i) t->Upsert(K(i), "v" + std::to_string(i));
    prepare(*t);
  }
  sched::RunSync(make(reference));
  if (!harness::HaltAfterNotice(tree, make(tree), kind)) return what + ": owner finished before its notice";

  PageId at{};
  tree.Table().ForEachLive([&](PageId pid, const Element *head) {
    if (head != nullptr && PendingNotice(head) != nullptr && PendingNotice(head)->Kind() == kind) at = pid;
  });
  if (!at.Valid()) return what + ": no pending notice";
  if (tree.MaybeTakeover(at)) return what + ": fresh notice taken over";
  for (int i = 0; i < 2; ++i) {
    tree.Epochs().TryAdvance();
    tree.Epochs().Collect();
  }
  if (tree.MaybeTakeover(at)) return what + ": taken over after two epochs";
  tree.Epochs().TryAdvance();
  tree.Epochs().Collect();
  if (!tree.MaybeTakeover(at)) return what + ": no takeover after three epochs";
  if (tree.Snapshot() != reference.Snapshot()) return what + ": records differ from the uninterrupted run";
  if (tree.Height() != reference.Height()) return what + ": height differs from the uninterrupted run";
  if (auto v = tree.Validate(true); !v.empty()) return what + ": " + v;
  return {};
}

auto
TakeoverLiveness() -> Outcome
{
  std::string bad;
  uint64_t takeovers = 0;
  for (const auto &s : harness::ScenarioLibrary()) {
    if (s.name.rfind("takeover_", 0) != 0) continue;
    const auto r = harness::ExploreExhaustive(s);
    takeovers += r.coverage.contains("takeovers") ? r.coverage.at("takeovers") : 0;
    if (!r.Ok()) bad += " " + s.name;
  }
  const auto consolidate_all = [](Tree &t) {
    std::vector<PageId> pids;
    t.Table().ForEachLive([&](PageId pid, const Element *head) {
      if (head != nullptr) pids.push_back(pid);
    });
    for (const auto pid : pids) t.Consolidate(pid);
  };
  const auto checks = {
      HaltedVersusUninterrupted(
          "consolidation", 3, [](Tree &) {},
          [](Tree &t) { return harness::Discard(t.ConsolidateTask(t.LeafOf(K(1)))); }, ElementKind::kCNotice),
      HaltedVersusUninterrupted(
          "split", 6, consolidate_all, [](Tree &t) { return harness::Discard(t.SplitTask(t.LeafOf(K(1)))); },
          ElementKind::kSNotice),
      HaltedVersusUninterrupted(
          "merge", 6,
          [&](Tree &t) {
            consolidate_all(t);
            t.Split(t.LeafOf(K(1)));
            consolidate_all(t);
          },
          [](Tree &t) { return harness::Discard(t.MergeTask(*t.PlanMergeOf(t.LeafOf(K(5))))); },
          ElementKind::kDNotice),
  };
  for (const auto &c : checks) {
    if (!c.empty()) bad += " " + c;
  }
  return {bad.empty(), "scenario takeovers=" + std::to_string(takeovers) + bad};
}

/*##############################################################################
 * 7-8 and throughput: real threads
 *############################################################################*/

auto
StressSpec(uint64_t seed) -> WorkloadSpec
{
  WorkloadSpec spec;
  spec.ops = 1000000;
  spec.threads = 8;
  spec.keys = 20000;
  spec.dist = KeyDist::Parse("zipf:0.99");
  spec.mix = OpMix::Parse("0.4:0.35:0.2:0.05");
  spec.seed = seed;
  spec.tree.consolidate_threshold = 8;
  spec.tree.split_threshold = 32;
  spec.tree.merge_threshold = 8;
  spec.tree.index_split_threshold = 32;
  spec.tree.poisoning = true;
  return spec;
}

std::vector<RunStats> stress_runs;

auto
Stress() -> Outcome
{
  const auto stats = RunStress(StressSpec(1));
  stress_runs.push_back(stats);
  std::ostringstream d;
  d << "failures=" << stats.failures.size() << " splits=" << stats.counters.splits
    << " merges=" << stats.counters.merges << " takeovers=" << stats.counters.takeovers
    << " sentinel_touches=" << stats.sentinel_touches << " epochs_advanced=" << stats.epochs_advanced
    << " reclaimed_during_run=" << stats.reclaimed_during_run;
  if (!stats.failures.empty()) d << " first=" << stats.failures.front();
  return {stats.Ok() && stats.counters.splits > 0 && stats.counters.merges > 0 && stats.sentinel_touches == 0,
          d.str()};
}

auto
EpochSafety() -> Outcome
{
  for (const uint64_t seed : {2, 3}) stress_runs.push_back(RunStress(StressSpec(seed)));
  uint64_t touches = 0;
  size_t fails = 0;
  for (const auto &s : stress_runs) {
    touches += s.sentinel_touches;
    fails += s.failures.size();
  }
  return {stress_runs.size() == 3 && touches == 0 && fails == 0,
          "seeds=" + std::to_string(stress_runs.size()) + " sentinel_touches=" + std::to_string(touches)};
}

auto
ThroughputSmoke() -> Outcome
{
  auto spec = StressSpec(4);
  spec.mix = OpMix::Parse("0.9:0.05:0.03:0.02");
  spec.ops = 400000;
  spec.threads = 1;
  const auto one = RunStress(spec);
  spec.threads = 8;
  const auto eight = RunStress(spec);
  std::ostringstream d;
  d << "1 thread " << static_cast<uint64_t>(one.ops_per_sec) << " ops/s, 8 threads "
    << static_cast<uint64_t>(eight.ops_per_sec) << " ops/s, " << std::thread::hardware_concurrency() << " cpus";
  return {one.Ok() && eight.Ok() && eight.ops_per_sec > one.ops_per_sec, d.str()};
}
}  // namespace

auto
main() -> int
{
  Report("1 cost-anchors", CostAnchors);
  Report("2 crossover-curves", CostCurves);
  Report("3 record-vs-page-caching", RecordVsPage);
  Report("4 sequential-oracle", SequentialOracle);
  Report("5 scenario-library", ScenarioLibraryClean);
  Report("6 takeover-liveness", TakeoverLiveness);
  Report("7 multi-thread-stress", Stress);
  Report("8 epoch-safety", EpochSafety);
  Report("smoke throughput-8-vs-1", ThroughputSmoke);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
