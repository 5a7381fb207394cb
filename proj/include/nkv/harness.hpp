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

#ifndef NKV_HARNESS_HPP
#define NKV_HARNESS_HPP

// C++ standard libraries
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// local sources
#include "nkv/node_chain.hpp"
#include "nkv/sched.hpp"
#include "nkv/tree.hpp"

/**
 * Deterministic interleaving of tree step machines on one thread.
 *
 * A scenario names a handful of machines, each a short list of operations.
 * Every run builds a fresh tree, primes each machine up to its first schedule
 * point and then resumes one machine per step. Checkers run after every step
 * and once more when all machines have finished.
 */
namespace nkv::harness
{
class ExplosionError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

/// A schedule that does not fit its scenario, or a malformed schedule text.
class ScheduleError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

/// Machine ids in the order they were resumed.
using Schedule = std::vector<uint32_t>;

auto FormatSchedule(const Schedule &schedule) -> std::string;
auto ParseSchedule(std::string_view text) -> Schedule;

enum class OpKind : uint8_t {
  kGet,
  kUpsert,
  kDelete,
  kScan,
  kConsolidate,  // the leaf owning key
  kSplit,        // the leaf owning key, or the root when level > 0
  kMerge,        // the leaf owning key into its left sibling
  kTakeoverAll,  // TakeoverTask on every live pid
  kTakeover,     // TakeoverTask on the pid holding a pending notice of the given kind
  kAdvance,      // count epoch advance attempts, each followed by a collect
  kReserve,      // count bytes from the tree's log buffer
  kTouch,        // count empty steps
};

struct Op {
  OpKind kind{OpKind::kGet};
  Key key{};
  Key arg{};  // upsert value or scan high
  uint32_t count{1};
  uint32_t level{0};
  ElementKind notice{ElementKind::kBase};
};

inline auto GetOp(Key key) -> Op { return Op{OpKind::kGet, std::move(key)}; }
inline auto UpsertOp(Key key, Value value) -> Op { return Op{OpKind::kUpsert, std::move(key), std::move(value)}; }
inline auto DeleteOp(Key key) -> Op { return Op{OpKind::kDelete, std::move(key)}; }
inline auto ScanOp(Key low, Key high) -> Op { return Op{OpKind::kScan, std::move(low), std::move(high)}; }
inline auto ConsolidateOp(Key key) -> Op { return Op{OpKind::kConsolidate, std::move(key)}; }
inline auto SplitOp(Key key, uint32_t level = 0) -> Op { return Op{OpKind::kSplit, std::move(key), {}, 1, level}; }
inline auto MergeOp(Key key) -> Op { return Op{OpKind::kMerge, std::move(key)}; }
inline auto TakeoverAllOp() -> Op { return Op{OpKind::kTakeoverAll}; }
inline auto TakeoverOp(ElementKind kind) -> Op { return Op{.kind = OpKind::kTakeover, .notice = kind}; }
inline auto AdvanceOp(uint32_t n) -> Op { return Op{OpKind::kAdvance, {}, {}, n}; }
inline auto ReserveOp(uint32_t bytes) -> Op { return Op{OpKind::kReserve, {}, {}, bytes}; }
inline auto TouchOp(uint32_t steps) -> Op { return Op{OpKind::kTouch, {}, {}, steps}; }

struct MachineDef {
  std::string name;
  std::vector<Op> ops;
  /// Destroy the machine right after it installs a notice of this kind.
  std::optional<ElementKind> halt_after_notice{};
};

/// What an operation returned, for final checks.
struct OpResult {
  Op op;
  bool returned{false};
  bool flag{false};  // consolidate/split/merge/takeover success; advances reached count
  uint64_t number{0};  // records moved by a split; epochs advanced; reserved offset
  std::optional<Value> got{};
  std::vector<Record> scanned{};
  std::string error{};
};

struct RunView {
  Tree &tree;
  const std::vector<std::vector<OpResult>> &results;
  const std::vector<bool> &halted;
};

struct ScenarioDef {
  std::string name;
  TreeConfig config{};
  std::vector<std::pair<Key, Value>> preload{};
  /// Synchronous preparation after the preload, e.g. forcing a split.
  std::function<void(Tree &)> setup{};
  std::vector<MachineDef> machines{};
  /// Choices forced at the start of every run.
  Schedule prefix{};
  /// Sites that suspend; other points collapse into the surrounding step.
  uint32_t site_mask{sched::kAllSites};
  /// No data writes: the key set must stay fixed at every step.
  bool static_keys{false};
  bool linearizable{true};
  std::function<std::string(const RunView &)> final_check{};
};

struct Violation {
  std::string checker;
  std::string message;
  Schedule schedule;
};

struct Report {
  std::string scenario{};
  uint64_t schedules{0};
  uint64_t steps{0};
  uint64_t violation_count{0};
  /// Shortest reproducing schedule per checker.
  std::vector<Violation> violations{};
  /// Summed per-run counters: CAS wins and losses, notices, takeovers, winners.
  std::map<std::string, uint64_t> coverage{};
  /// Order-independent digest of the explored schedules.
  uint64_t schedule_digest{0};
  /// Hash of the final tree state (records and structure) of the last run.
  uint64_t final_hash{0};
  /// Rendered operation results of the last run, machine by machine.
  std::vector<std::string> outputs{};
  Schedule last_schedule{};

  [[nodiscard]] auto Ok() const -> bool { return violation_count == 0; }
  [[nodiscard]] auto Format() const -> std::string;
};

struct Options {
  uint64_t bound{1000000};
  /// Adds a checker that fails every run; exercises violation reporting.
  bool broken_checker{false};
};

/// Every maximal interleaving, depth first. Throws ExplosionError past the bound.
auto ExploreExhaustive(const ScenarioDef &scenario, const Options &options = {}) -> Report;

/// @p schedules uniformly random choices per step, deterministic in @p seed.
auto ExploreRandom(const ScenarioDef &scenario, uint64_t schedules, uint64_t seed, const Options &options = {})
    -> Report;

/// Re-executes one recorded schedule; throws ScheduleError on mismatch.
auto Replay(const ScenarioDef &scenario, const Schedule &schedule, const Options &options = {}) -> Report;

/// Runs machines one after another to completion, in id order.
auto RunSequential(const ScenarioDef &scenario, const Options &options = {}) -> Report;

/// Drives @p task until it installs a notice of @p kind, then destroys it.
/// Returns false if the task finished first.
auto HaltAfterNotice(Tree &tree, sched::Task<void> task, ElementKind kind) -> bool;

template <class T>
auto
Discard(sched::Task<T> task) -> sched::Task<void>
{
  co_await std::move(task);
}

}  // namespace nkv::harness

#endif  // NKV_HARNESS_HPP
