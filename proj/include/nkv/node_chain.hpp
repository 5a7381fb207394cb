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

#ifndef NKV_NODE_CHAIN_HPP
#define NKV_NODE_CHAIN_HPP

// C++ standard libraries
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// local sources
#include "nkv/epoch.hpp"
#include "nkv/log_buffer.hpp"
#include "nkv/mapping_table.hpp"

namespace nkv
{
using Key = std::string;
using Value = std::string;

/// A range bound; nullopt stands for infinity on that side.
using Bound = std::optional<Key>;

enum class ElementKind : uint8_t {
  kBase,
  kInsert,
  kUpdate,
  kDelete,
  kIndexEntry,
  kCNotice,
  kSNotice,
  kMNotice,
  kDNotice,
  kXNotice,
};

auto ElementKindName(ElementKind kind) -> const char *;

constexpr auto
IsNotice(ElementKind kind) -> bool
{
  return kind >= ElementKind::kCNotice;
}

constexpr auto
IsRecordDelta(ElementKind kind) -> bool
{
  return kind == ElementKind::kInsert || kind == ElementKind::kUpdate || kind == ElementKind::kDelete;
}

enum class NodeKind : uint8_t { kData, kIndex };

/**
 * @brief A search position: the key itself, or the gap just after it.
 *
 * Nodes own the half-open range (low, high]; a probe with `after` set sorts
 * after every key equal to `key`, which lets scans resume past a node's high.
 */
struct Probe {
  Key key;
  bool after{false};
};

/// True if the probe sorts after @p low (always true for an infinite low).
auto ProbeAbove(const Probe &probe, const Bound &low) -> bool;

/// True if the probe sorts at or before @p high (always true for an infinite high).
auto ProbeWithin(const Probe &probe, const Bound &high) -> bool;

/// True if key lies in (low, high].
auto InRange(const Key &key, const Bound &low, const Bound &high) -> bool;

struct Record {
  Key key;
  Value value;

  auto operator==(const Record &) const -> bool = default;
};

struct IndexTerm {
  Key sep;
  PageId child;
};

class Element : public Retirable
{
 public:
  [[nodiscard]] auto Kind() const -> ElementKind { return kind_; }
  [[nodiscard]] auto Next() const -> const Element * { return next_; }

 protected:
  Element(ElementKind kind, const Element *next) : kind_{kind}, next_{next} {}

 private:
  const ElementKind kind_;
  const Element *const next_;
};

/**
 * @brief The read-optimized node state at the bottom of every chain.
 *
 * Data nodes hold sorted records; index nodes hold sorted terms whose first
 * separator equals the node's low bound. Every key k in the node satisfies
 * low < k <= high; keys above high are reached through the side link.
 */
class BaseNode final : public Element
{
 public:
  BaseNode(NodeKind node_kind,
           uint32_t level,
           Bound low,
           Bound high,
           PageId side,
           std::vector<Record> records,
           std::vector<IndexTerm> terms);

  [[nodiscard]] auto GetNodeKind() const -> NodeKind { return node_kind_; }
  [[nodiscard]] auto IsData() const -> bool { return node_kind_ == NodeKind::kData; }
  [[nodiscard]] auto Level() const -> uint32_t { return level_; }
  [[nodiscard]] auto Low() const -> const Bound & { return low_; }
  [[nodiscard]] auto High() const -> const Bound & { return high_; }
  [[nodiscard]] auto Side() const -> PageId { return side_; }
  [[nodiscard]] auto Records() const -> const std::vector<Record> & { return records_; }
  [[nodiscard]] auto Terms() const -> const std::vector<IndexTerm> & { return terms_; }

  [[nodiscard]] auto Find(const Key &key) const -> const Record *;

  /// Index of the last term whose separator sorts before @p probe (0 if none).
  [[nodiscard]] auto RouteTerm(const Probe &probe) const -> size_t;

 private:
  NodeKind node_kind_;
  uint32_t level_;
  Bound low_;
  Bound high_;
  PageId side_;
  std::vector<Record> records_;
  std::vector<IndexTerm> terms_;
};

/// insert / update / delete of one record.
class RecordDelta final : public Element
{
 public:
  RecordDelta(ElementKind kind, Key key, Value value, const Element *next);

  [[nodiscard]] auto GetKey() const -> const Key & { return key_; }
  [[nodiscard]] auto GetValue() const -> const Value & { return value_; }
  [[nodiscard]] auto IsDelete() const -> bool { return Kind() == ElementKind::kDelete; }

 private:
  Key key_;
  Value value_;
};

/// A new index term (separator, child) posted at a parent.
class IndexEntryDelta final : public Element
{
 public:
  IndexEntryDelta(Key sep, PageId child, const Element *next)
      : Element{ElementKind::kIndexEntry, next}, sep_{std::move(sep)}, child_{child}
  {
  }

  [[nodiscard]] auto Sep() const -> const Key & { return sep_; }
  [[nodiscard]] auto Child() const -> PageId { return child_; }

 private:
  Key sep_;
  PageId child_;
};

class Notice : public Element
{
 public:
  [[nodiscard]] auto OwnerEpoch() const -> Epoch { return owner_epoch_; }

 protected:
  Notice(ElementKind kind, Epoch owner_epoch, const Element *next) : Element{kind, next}, owner_epoch_{owner_epoch} {}

 private:
  Epoch owner_epoch_;
};

class ConsolidateNotice final : public Notice
{
 public:
  ConsolidateNotice(Epoch owner_epoch, const Element *next) : Notice{ElementKind::kCNotice, owner_epoch, next} {}
};

/**
 * @brief Announces a split of old_pid at split_key.
 *
 * One instance is installed at both PIDs: first at new_pid (uncontended), then
 * at old_pid by CAS. Its next link is the old node's state, which both PIDs
 * share read-only until the split completes.
 */
class SplitNotice final : public Notice
{
 public:
  SplitNotice(Epoch owner_epoch, const Element *next, Key split_key, PageId old_pid, PageId new_pid, BufferTicket ticket)
      : Notice{ElementKind::kSNotice, owner_epoch, next},
        split_key_{std::move(split_key)},
        old_pid_{old_pid},
        new_pid_{new_pid},
        ticket_{ticket}
  {
  }

  [[nodiscard]] auto SplitKey() const -> const Key & { return split_key_; }
  [[nodiscard]] auto OldPid() const -> PageId { return old_pid_; }
  [[nodiscard]] auto NewPid() const -> PageId { return new_pid_; }
  [[nodiscard]] auto Ticket() const -> const BufferTicket & { return ticket_; }

 private:
  Key split_key_;
  PageId old_pid_;
  PageId new_pid_;
  BufferTicket ticket_;
};

/// Parent P, left sibling L, and the node D being merged into its left neighbor.
struct MergePlan {
  PageId parent;
  PageId left;
  PageId dead;
  Key separator;  // D's index term separator (D's low bound)
};

/**
 * @brief mNOTICE at the parent, dNOTICE at the dying node, xNOTICE at the
 * absorbing left neighbor. All three carry the full plan.
 */
class MergeNotice final : public Notice
{
 public:
  MergeNotice(ElementKind kind, Epoch owner_epoch, const Element *next, MergePlan plan, Bound merge_high)
      : Notice{kind, owner_epoch, next}, plan_{std::move(plan)}, merge_high_{std::move(merge_high)}
  {
  }

  [[nodiscard]] auto Plan() const -> const MergePlan & { return plan_; }
  [[nodiscard]] auto MergeLow() const -> const Key & { return plan_.separator; }
  [[nodiscard]] auto MergeHigh() const -> const Bound & { return merge_high_; }
  [[nodiscard]] auto RedirectTo() const -> PageId { return plan_.left; }

 private:
  MergePlan plan_;
  Bound merge_high_;
};

/*##############################################################################
 * Chain operations
 *############################################################################*/

/// Returns @p element as the new head; @p element must already link to @p head.
auto Prepend(const Element *head, const Element *element) -> const Element *;

struct ChainLength {
  size_t data_deltas{0};
  size_t notices{0};
};

auto ChainLengthOf(const Element *head) -> ChainLength;

/// The bottom of a chain.
auto BaseOf(const Element *head) -> const BaseNode *;

/// The first notice met walking down from @p head, or nullptr.
auto PendingNotice(const Element *head) -> const Notice *;

struct LookupResult {
  enum class Status : uint8_t { kFound, kAbsent, kRedirect };

  Status status{Status::kAbsent};
  Value value{};
  PageId redirect{};
};

/// Where the chain is being read from, for notices whose meaning depends on it.
struct ChainContext {
  PageId pid{};
  bool via_side{false};
};

auto SearchChain(const Element *head, const Key &key, ChainContext ctx = {}) -> LookupResult;

class UnresolvedNoticeError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

/// The fully applied sorted record set of a data chain.
auto LogicalView(const Element *head) -> std::vector<Record>;

/// Order-sensitive digest of a chain's contents.
auto ChainChecksum(const Element *head) -> uint64_t;

/*##############################################################################
 * Materialization used by consolidation and structure modifications
 *############################################################################*/

/**
 * @brief The applied content of a notice-free region of a chain.
 *
 * Records are restricted to (low, high]. Data deltas for keys above high are
 * kept separately as the newest effect per key (nullopt = delete); they arise
 * when writers redirected by a pending merge post at the left neighbor.
 */
struct NodeImage {
  NodeKind kind{NodeKind::kData};
  uint32_t level{0};
  Bound low{};
  Bound high{};
  PageId side{};
  std::map<Key, Value> records{};
  std::map<Key, std::optional<Value>> overflow{};
  PageId first_child{};
  std::map<Key, PageId> terms{};  // separators after the first term

  [[nodiscard]] auto Size() const -> size_t { return kind == NodeKind::kData ? records.size() : terms.size() + 1; }
};

/**
 * @brief Applies a region (deltas over a base) into an image.
 *
 * @param region the top of a region containing no redirecting notices.
 * @param low, high the range to keep; keys at or below low are dropped.
 * @param keep_overflow whether data keys above high are kept as overflow.
 * @param dead an index separator/child pair to omit (pending merge), if any.
 * @param skip_notices treat every notice as transparent instead of rejecting it.
 */
auto Materialize(const Element *region,
                 const Bound &low,
                 const Bound &high,
                 bool keep_overflow,
                 const std::optional<std::pair<Key, PageId>> &dead = std::nullopt,
                 bool skip_notices = false) -> NodeImage;

/// Materializes using the region's own base range.
auto MaterializeRegion(const Element *region) -> NodeImage;

/// A thread-private chain built from an image: a base plus overflow deltas.
struct BuiltChain {
  const BaseNode *base{nullptr};
  const Element *top{nullptr};
};

auto BuildChain(const NodeImage &image) -> BuiltChain;

/// Deletes a never-published chain down to and including @p stop (or its base).
void DeleteUnpublished(const Element *top, const Element *stop = nullptr);

/// The deltas strictly above @p notice, top first; empty if the notice is absent.
auto DeltasAbove(const Element *head, const Element *notice, bool *found) -> std::vector<const Element *>;

/// Copies @p deltas (top first) onto @p onto, preserving their order.
auto RelinkCopies(const std::vector<const Element *> &deltas, const Element *onto) -> const Element *;

/// A compact byte image of a node, as written to the log buffer.
auto SerializeImage(const NodeImage &image) -> std::string;

}  // namespace nkv

#endif  // NKV_NODE_CHAIN_HPP
