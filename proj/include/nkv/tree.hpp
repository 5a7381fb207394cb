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

#ifndef NKV_TREE_HPP
#define NKV_TREE_HPP

// C++ standard libraries
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// local sources
#include "nkv/epoch.hpp"
#include "nkv/log_buffer.hpp"
#include "nkv/mapping_table.hpp"
#include "nkv/node_chain.hpp"
#include "nkv/sched.hpp"

namespace nkv
{
struct TreeConfig {
  size_t consolidate_threshold{8};
  size_t split_threshold{64};
  size_t merge_threshold{8};
  size_t index_split_threshold{64};
  uint64_t notice_timeout_epochs{3};
  /// Trigger consolidation, splits and merges from ordinary operations.
  bool auto_smo{true};
  /// Writers complete stale notices they pass on the way.
  bool takeover_on_access{true};
  size_t table_capacity{MappingTable::kDefaultCapacity};
  size_t buffer_bytes{size_t{64} << 20};
  bool poisoning{false};

  /// Throws std::invalid_argument on inconsistent thresholds.
  void Validate() const;
};

class IneligibleMergeError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class InvalidRangeError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

struct SplitOutcome {
  bool posted{false};     // this caller's sNOTICE won at the old node
  bool completed{false};  // this caller installed the rebuilt old node
  size_t moved{0};        // records/terms this caller copied into new nodes
};

struct MergeOutcome {
  bool started{false};    // this caller posted the mNOTICE
  bool completed{false};  // this caller removed the dead node's index term
  bool deferred{false};   // progress blocked by another pending notice
};

struct TreeCounters {
  uint64_t consolidations{0};
  uint64_t cnotice_posts{0};
  uint64_t cnotice_losses{0};
  uint64_t snotice_posts{0};
  uint64_t split_losses{0};
  uint64_t split_aborts{0};
  uint64_t splits{0};
  uint64_t mnotice_posts{0};
  uint64_t dnotice_posts{0};
  uint64_t xnotice_posts{0};
  uint64_t merges{0};
  uint64_t takeovers{0};
  uint64_t index_posts{0};
  uint64_t root_grows{0};
  uint64_t records_moved{0};
  uint64_t restarts{0};
  uint64_t max_chain{0};
  std::array<uint64_t, sched::kSiteCount> cas_failures{};
};

/// Hooks for the interleaving harness; all calls happen on the acting thread.
class TreeObserver
{
 public:
  virtual ~TreeObserver() = default;
  virtual void OnNoticeInstalled(PageId /*pid*/, const Notice * /*notice*/) {}
  virtual void OnNoticeReplaced(PageId /*pid*/, const Notice * /*notice*/, const Element * /*new_head*/) {}
};

/**
 * @brief A latch-free B-link tree of delta chains.
 *
 * Every operation exists as a step machine (the *Task functions) that awaits a
 * schedule point before each mapping-table read, CAS, root access or buffer
 * reservation, and as a synchronous wrapper for ordinary callers.
 */
class Tree
{
 public:
  explicit Tree(TreeConfig config = {});
  Tree(const Tree &) = delete;
  auto operator=(const Tree &) -> Tree & = delete;
  ~Tree();

  /*############################################################################
   * Synchronous API
   *##########################################################################*/

  auto Get(const Key &key) -> std::optional<Value>;
  void Upsert(const Key &key, const Value &value);
  void Delete(const Key &key);

  /// Live records with low <= key < high, in key order.
  auto RangeScan(const Key &low, const Key &high) -> std::vector<Record>;

  auto Consolidate(PageId pid) -> bool;
  auto Split(PageId pid) -> bool;
  auto Merge(const MergePlan &plan) -> bool;
  auto MaybeTakeover(PageId pid) -> bool;

  /*############################################################################
   * Step machines
   *##########################################################################*/

  auto GetTask(Key key) -> sched::Task<std::optional<Value>>;
  auto UpsertTask(Key key, Value value) -> sched::Task<void>;
  auto DeleteTask(Key key) -> sched::Task<void>;
  auto ScanTask(Key low, Key high) -> sched::Task<std::vector<Record>>;
  auto ConsolidateTask(PageId pid) -> sched::Task<bool>;
  auto SplitTask(PageId pid) -> sched::Task<SplitOutcome>;
  auto MergeTask(MergePlan plan) -> sched::Task<MergeOutcome>;
  auto TakeoverTask(PageId pid) -> sched::Task<bool>;

  /*############################################################################
   * Introspection and maintenance (not for use concurrently with writers)
   *##########################################################################*/

  [[nodiscard]] auto RootPid() const -> PageId { return root_.load(std::memory_order_seq_cst); }
  [[nodiscard]] auto Config() const -> const TreeConfig & { return config_; }
  auto Table() -> MappingTable & { return table_; }
  auto Epochs() -> EpochManager & { return epochs_; }
  auto Buffer() -> LogBuffer & { return buffer_; }
  [[nodiscard]] auto Counters() const -> TreeCounters;
  void SetObserver(TreeObserver *observer) { observer_ = observer; }
  [[nodiscard]] auto Observer() const -> TreeObserver * { return observer_; }

  /// The data node that owns @p key.
  auto LeafOf(const Key &key) -> PageId;

  /// The plan for merging @p dead into its left sibling, if it has one.
  auto PlanMergeOf(PageId dead) -> std::optional<MergePlan>;

  /// Advances epochs and drives pending notices and long chains to completion.
  void Quiesce();

  /// Structural validation; returns an empty string when the tree is sound.
  auto Validate(bool require_quiescent = false) -> std::string;

  /// Every live record in key order.
  auto Snapshot() -> std::vector<Record>;

  [[nodiscard]] auto Height() -> uint32_t;
  auto Dump() -> std::string;

 private:
  enum class Mode : uint8_t { kGet, kWrite, kScan, kLocate };

  struct Step;
  struct Position;

  auto Examine(PageId pid, const Element *head, const Probe &probe, Mode mode, bool via_side) -> Step;
  auto Descend(Probe probe, Mode mode, uint32_t level) -> sched::Task<Position>;
  auto WriteTask(Key key, std::optional<Value> value) -> sched::Task<void>;
  auto ScanImpl(Key low, std::optional<Key> high) -> sched::Task<std::vector<Record>>;
  auto LocateTask(Key key) -> sched::Task<PageId>;
  auto PlanMergeTask(PageId dead) -> sched::Task<std::optional<MergePlan>>;
  auto LeafView(const Position &pos) -> NodeImage;
  auto OverflowAllowed(const BaseNode *base, const NodeImage &image) -> bool;

  auto Install(PageId pid, const Element *expected, const Element *desired) -> bool;
  auto Stale(const Notice *notice) const -> bool;
  void RetireChain(const Element *top, const Element *stop);
  void NoteInstalled(PageId pid, const Notice *notice);
  void NoteReplaced(PageId pid, const Notice *notice, const Element *new_head);

  auto CompleteConsolidation(PageId pid, const Notice *notice, PageId parent) -> sched::Task<bool>;
  auto AfterConsolidation(PageId pid, const BaseNode *base, PageId parent) -> sched::Task<void>;
  auto ResumeSplit(const SplitNotice *notice, size_t *moved) -> sched::Task<bool>;
  auto PostIndexTerm(uint32_t level, Key sep, PageId child, PageId left) -> sched::Task<bool>;
  auto SplitNode(PageId pid) -> sched::Task<SplitOutcome>;
  auto StartMerge(PageId parent, PageId dead, std::optional<MergePlan> given, bool strict)
      -> sched::Task<MergeOutcome>;
  auto ResumeMerge(MergePlan plan) -> sched::Task<MergeOutcome>;
  auto TakeoverNotice(PageId pid, const Notice *notice) -> sched::Task<bool>;
  auto AfterWrite(const Position &pos) -> sched::Task<void>;

  struct AtomicCounters {
    std::atomic<uint64_t> consolidations{0};
    std::atomic<uint64_t> cnotice_posts{0};
    std::atomic<uint64_t> cnotice_losses{0};
    std::atomic<uint64_t> snotice_posts{0};
    std::atomic<uint64_t> split_losses{0};
    std::atomic<uint64_t> split_aborts{0};
    std::atomic<uint64_t> splits{0};
    std::atomic<uint64_t> mnotice_posts{0};
    std::atomic<uint64_t> dnotice_posts{0};
    std::atomic<uint64_t> xnotice_posts{0};
    std::atomic<uint64_t> merges{0};
    std::atomic<uint64_t> takeovers{0};
    std::atomic<uint64_t> index_posts{0};
    std::atomic<uint64_t> root_grows{0};
    std::atomic<uint64_t> records_moved{0};
    std::atomic<uint64_t> restarts{0};
    std::atomic<uint64_t> max_chain{0};
    std::array<std::atomic<uint64_t>, sched::kSiteCount> cas_failures{};
  };

  TreeConfig config_;
  EpochManager epochs_;
  MappingTable table_;
  LogBuffer buffer_;
  std::atomic<PageId> root_;
  AtomicCounters counters_;
  TreeObserver *observer_{nullptr};
};

}  // namespace nkv

#endif  // NKV_TREE_HPP
