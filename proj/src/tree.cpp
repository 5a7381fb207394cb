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

#include "nkv/tree.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "tree_internal.hpp"

namespace nkv
{
using sched::At;
using sched::Do;
using sched::Site;
using sched::Task;

namespace
{
constexpr uint64_t kMaxRestarts = 100000;
constexpr int kQuiesceRounds = 64;

void
BumpMax(std::atomic<uint64_t> &slot, uint64_t value)
{
  auto cur = slot.load(std::memory_order_relaxed);
  while (cur < value && !slot.compare_exchange_weak(cur, value, std::memory_order_relaxed)) {
  }
}

auto
BoundText(const Bound &b, const char *inf) -> std::string
{
  return b ? "\"" + *b + "\"" : std::string{inf};
}

/// Deletes the private copies stacked above @p keep.
void
DropCopies(const Element *top, const Element *keep)
{
  while (top != keep) {
    const auto *next = top->Next();
    delete top;
    top = next;
  }
}
}  // namespace

void
TreeConfig::Validate() const
{
  if (consolidate_threshold < 1) throw std::invalid_argument{"consolidate_threshold must be at least 1"};
  if (split_threshold < 4) throw std::invalid_argument{"split_threshold must be at least 4"};
  if (split_threshold <= 2 * merge_threshold) {
    throw std::invalid_argument{"split_threshold must exceed twice merge_threshold"};
  }
  if (index_split_threshold < 4) throw std::invalid_argument{"index_split_threshold must be at least 4"};
  if (notice_timeout_epochs < 2) throw std::invalid_argument{"notice_timeout_epochs must be at least 2"};
}

Tree::Tree(TreeConfig config)
    : config_{(config.Validate(), config)},
      epochs_{EpochManager::Options{.initial = 1, .poisoning = config.poisoning}},
      table_{epochs_, config.table_capacity},
      buffer_{config.buffer_bytes}
{
  const auto *root = new BaseNode{NodeKind::kData, 0, std::nullopt, std::nullopt, PageId{}, {}, {}};
  root_.store(table_.Allocate(root));
}

Tree::~Tree()
{
  epochs_.DrainAll();
  std::unordered_set<const Element *> seen;
  table_.ForEachLive([&](PageId, const Element *head) {
    for (const auto *e = head; e != nullptr; e = e->Next()) {
      if (!seen.insert(e).second) break;
    }
  });
  for (const auto *e : seen) delete e;
}

/*##############################################################################
 * Traversal
 *############################################################################*/

auto
Tree::Examine(PageId pid, const Element *head, const Probe &probe, Mode mode, bool via_side) -> Step
{
  using Act = Step::Act;
  Step s{};
  const bool want = (mode == Mode::kGet || mode == Mode::kWrite) && !probe.after;
  std::optional<std::pair<Key, PageId>> dead;
  std::vector<const IndexEntryDelta *> entries;
  const SplitNotice *split = nullptr;

  for (const auto *e = head;; e = e->Next()) {
    CheckLive(e);
    switch (e->Kind()) {
      case ElementKind::kInsert:
      case ElementKind::kUpdate:
      case ElementKind::kDelete: {
        ++s.data_deltas;
        const auto *d = static_cast<const RecordDelta *>(e);
        if (want && !s.match && d->GetKey() == probe.key) {
          s.match = d->IsDelete() ? std::optional<Value>{} : std::optional<Value>{d->GetValue()};
          if (mode == Mode::kGet) {
            s.act = Act::kHere;
            return s;
          }
        }
        break;
      }
      case ElementKind::kIndexEntry:
        ++s.data_deltas;
        entries.push_back(static_cast<const IndexEntryDelta *>(e));
        break;
      case ElementKind::kCNotice:
      case ElementKind::kXNotice:
        if (s.notice == nullptr) s.notice = static_cast<const Notice *>(e);
        break;
      case ElementKind::kMNotice: {
        const auto *m = static_cast<const MergeNotice *>(e);
        if (s.notice == nullptr) s.notice = m;
        dead.emplace(m->Plan().separator, m->Plan().dead);
        break;
      }
      case ElementKind::kSNotice: {
        split = static_cast<const SplitNotice *>(e);
        if (s.notice == nullptr) s.notice = split;
        if (pid == split->NewPid()) {
          if (!ProbeAbove(probe, split->SplitKey())) {
            s.act = Act::kRedirect;
            s.next = split->OldPid();
            return s;
          }
        } else if (ProbeAbove(probe, split->SplitKey())) {
          s.act = Act::kRedirect;
          s.next = split->NewPid();
          return s;
        }
        break;
      }
      case ElementKind::kDNotice:
        if (s.notice == nullptr) s.notice = static_cast<const Notice *>(e);
        if (!via_side) {
          s.act = Act::kRestart;
          return s;
        }
        s.dead_via_side = true;
        break;
      case ElementKind::kBase: {
        const auto *b = static_cast<const BaseNode *>(e);
        s.base = b;
        s.eff_low = b->Low();
        s.eff_high = b->High();
        s.eff_side = b->Side();
        if (split != nullptr) {
          if (pid == split->NewPid()) {
            s.eff_low = split->SplitKey();
          } else {
            s.eff_high = split->SplitKey();
            s.eff_side = split->NewPid();
            s.keep_overflow = false;
          }
        }
        if (!ProbeAbove(probe, b->Low())) {
          s.act = Act::kRestart;
          return s;
        }
        if (!ProbeWithin(probe, b->High())) {
          if (!b->Side().Valid()) {
            s.act = Act::kRestart;
            return s;
          }
          s.act = Act::kSide;
          s.next = b->Side();
          return s;
        }
        s.act = Act::kHere;
        if (b->IsData()) {
          if (want && !s.match) {
            const auto *rec = b->Find(probe.key);
            s.match = rec != nullptr ? std::optional<Value>{rec->value} : std::optional<Value>{};
          }
          return s;
        }

        const auto &terms = b->Terms();
        auto idx = b->RouteTerm(probe);
        const auto is_dead = [&](const Key &sep, PageId child) {
          return dead && sep == dead->first && child == dead->second;
        };
        if (idx > 0 && is_dead(terms[idx].sep, terms[idx].child)) --idx;
        const Key *best = idx > 0 ? &terms[idx].sep : nullptr;
        s.next = terms[idx].child;
        for (const auto *d : entries) {
          if (!ProbeAbove(probe, d->Sep()) || is_dead(d->Sep(), d->Child())) continue;
          if (best == nullptr || d->Sep() > *best) {
            best = &d->Sep();
            s.next = d->Child();
          }
        }
        return s;
      }
    }
  }
}

auto
Tree::Descend(Probe probe, Mode mode, uint32_t level) -> Task<Position>
{
  using Act = Step::Act;
  Position pos{};
  for (uint64_t attempt = 0;; ++attempt) {
    if (attempt > 0) counters_.restarts.fetch_add(1, std::memory_order_relaxed);
    if (attempt > kMaxRestarts) throw std::logic_error{"descent does not converge"};

    PageId pid = co_await Do(Site::kRootRead, [this] { return root_.load(std::memory_order_seq_cst); });
    PageId parent{};
    bool direct = false;
    bool via_side = false;
    PageId src{};
    const Element *src_head = nullptr;
    Step src_step{};
    std::optional<Position::LazyTerm> lazy;

    for (bool restart = false; !restart;) {
      const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(pid); });
      auto s = Examine(pid, head, probe, mode, via_side);
      BumpMax(counters_.max_chain, s.data_deltas);
      if (s.notice != nullptr && pos.stale == nullptr && Stale(s.notice)) {
        pos.stale = s.notice;
        pos.stale_pid = pid;
      }

      switch (s.act) {
        case Act::kRestart:
          restart = true;
          break;
        case Act::kRedirect:
          pid = s.next;
          direct = false;
          via_side = false;
          break;
        case Act::kSide:
          if (mode == Mode::kWrite && direct && !lazy && s.base->High()) {
            lazy = Position::LazyTerm{s.base->Level() + 1, *s.base->High(), s.next};
          }
          src = pid;
          src_head = head;
          src_step = s;
          pid = s.next;
          direct = false;
          via_side = true;
          break;
        case Act::kHere: {
          if (mode == Mode::kGet && s.match) {
            pos.pid = pid;
            pos.head = head;
            pos.step = std::move(s);
            co_return pos;
          }
          const auto lvl = s.base->Level();
          if (lvl > level) {
            parent = pid;
            pid = s.next;
            direct = true;
            via_side = false;
            break;
          }
          if (lvl < level) co_return pos;  // the tree is not that tall
          pos.parent = direct ? parent : PageId{};
          pos.lazy = lazy;
          if (s.dead_via_side && (mode == Mode::kWrite || mode == Mode::kScan)) {
            if (!src.Valid() || (src_step.notice != nullptr && src_step.notice->Kind() == ElementKind::kDNotice)) {
              restart = true;
              break;
            }
            pos.dead = pid;
            pos.dead_head = head;
            pos.pid = src;
            pos.head = src_head;
            auto match = src_step.match ? src_step.match : s.match;
            pos.step = std::move(src_step);
            pos.step.match = std::move(match);
            pos.parent = PageId{};
            co_return pos;
          }
          pos.pid = pid;
          pos.head = head;
          pos.step = std::move(s);
          co_return pos;
        }
      }
    }
  }
}

auto
Tree::LeafView(const Position &pos) -> NodeImage
{
  const auto &s = pos.step;
  auto image = Materialize(pos.head, s.eff_low, s.eff_high, s.keep_overflow, std::nullopt, true);
  if (pos.dead.Valid()) {
    const auto *db = BaseOf(pos.dead_head);
    auto dimg = Materialize(pos.dead_head, db->Low(), db->High(), true, std::nullopt, true);
    for (const auto &[k, v] : image.overflow) {
      if (!InRange(k, db->Low(), db->High())) continue;
      if (v) {
        dimg.records[k] = *v;
      } else {
        dimg.records.erase(k);
      }
    }
    image.records.merge(dimg.records);
    image.high = db->High();
  }
  return image;
}

/*##############################################################################
 * Operations
 *############################################################################*/

auto
Tree::GetTask(Key key) -> Task<std::optional<Value>>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  const Probe probe{std::move(key), false};
  auto pos = co_await Descend(probe, Mode::kGet, 0);
  co_return pos.step.match.value_or(std::nullopt);
}

auto
Tree::UpsertTask(Key key, Value value) -> Task<void>
{
  return WriteTask(std::move(key), std::move(value));
}

auto
Tree::DeleteTask(Key key) -> Task<void>
{
  return WriteTask(std::move(key), std::nullopt);
}

auto
Tree::WriteTask(Key key, std::optional<Value> value) -> Task<void>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  Position pos;
  for (;;) {
    const Probe probe{key, false};
    pos = co_await Descend(probe, Mode::kWrite, 0);
    const bool exists = pos.step.match && pos.step.match->has_value();
    const auto kind = !value ? ElementKind::kDelete : (exists ? ElementKind::kUpdate : ElementKind::kInsert);
    const auto *delta = new RecordDelta{kind, key, value.value_or(Value{}), pos.head};
    const bool consolidate = config_.auto_smo && pos.step.notice == nullptr &&
                             pos.step.data_deltas + 1 >= config_.consolidate_threshold;
    const Notice *notice = consolidate ? new ConsolidateNotice{epochs_.Current(), delta} : nullptr;
    const Element *top = notice != nullptr ? static_cast<const Element *>(notice) : delta;
    const bool ok = co_await Do(Site::kCas, [&] { return Install(pos.pid, pos.head, top); });
    if (!ok) {
      if (notice != nullptr) counters_.cnotice_losses.fetch_add(1, std::memory_order_relaxed);
      delete notice;
      delete delta;
      continue;
    }
    if (notice != nullptr) {
      counters_.cnotice_posts.fetch_add(1, std::memory_order_relaxed);
      NoteInstalled(pos.pid, notice);
      co_await CompleteConsolidation(pos.pid, notice, pos.parent);
    }
    break;
  }
  co_await AfterWrite(pos);
}

auto
Tree::AfterWrite(const Position &pos) -> Task<void>
{
  if (config_.auto_smo && pos.lazy) {
    co_await PostIndexTerm(pos.lazy->level, pos.lazy->sep, pos.lazy->child, PageId{});
  }
  if (config_.takeover_on_access && pos.stale != nullptr) {
    co_await TakeoverNotice(pos.stale_pid, pos.stale);
  }
}

auto
Tree::ScanTask(Key low, Key high) -> Task<std::vector<Record>>
{
  if (low > high) throw InvalidRangeError{"scan low bound exceeds high bound"};
  return ScanImpl(std::move(low), std::move(high));
}

auto
Tree::ScanImpl(Key low, std::optional<Key> high) -> Task<std::vector<Record>>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  std::vector<Record> out;
  Probe cursor{std::move(low), false};
  for (;;) {
    auto pos = co_await Descend(cursor, Mode::kScan, 0);
    const auto image = LeafView(pos);
    for (auto it = image.records.lower_bound(cursor.key); it != image.records.end(); ++it) {
      if (cursor.after && it->first == cursor.key) continue;
      if (high && it->first >= *high) break;
      out.push_back(Record{it->first, it->second});
    }
    if (!image.high || (high && *image.high >= *high)) break;
    cursor = Probe{*image.high, true};
  }
  co_return out;
}

auto
Tree::ConsolidateTask(PageId pid) -> Task<bool>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(pid); });
  if (PendingNotice(head) != nullptr) co_return false;
  const Notice *notice = new ConsolidateNotice{epochs_.Current(), head};
  const bool ok = co_await Do(Site::kCas, [&] { return Install(pid, head, notice); });
  if (!ok) {
    delete notice;
    counters_.cnotice_losses.fetch_add(1, std::memory_order_relaxed);
    co_return false;
  }
  counters_.cnotice_posts.fetch_add(1, std::memory_order_relaxed);
  NoteInstalled(pid, notice);
  co_await CompleteConsolidation(pid, notice, PageId{});
  co_return true;
}

auto
Tree::CompleteConsolidation(PageId pid, const Notice *notice, PageId parent) -> Task<bool>
{
  const auto image = MaterializeRegion(notice->Next());
  const auto built = BuildChain(image);
  for (;;) {
    const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(pid); });
    bool found = false;
    const auto above = DeltasAbove(head, notice, &found);
    if (!found) {
      DeleteUnpublished(built.top);
      co_return false;
    }
    const auto *fresh = RelinkCopies(above, built.top);
    const bool ok = co_await Do(Site::kCas, [&] { return Install(pid, head, fresh); });
    if (ok) {
      counters_.consolidations.fetch_add(1, std::memory_order_relaxed);
      NoteReplaced(pid, notice, fresh);
      RetireChain(head, nullptr);
      if (config_.auto_smo) co_await AfterConsolidation(pid, built.base, parent);
      co_return true;
    }
    DropCopies(fresh, built.top);
  }
}

auto
Tree::AfterConsolidation(PageId pid, const BaseNode *base, PageId parent) -> Task<void>
{
  // base is still protected: it was installed under this operation's guard
  if (base->IsData()) {
    const auto n = base->Records().size();
    if (n >= config_.split_threshold) {
      co_await SplitNode(pid);
    } else if (parent.Valid() && n < config_.merge_threshold && base->Low()) {
      const std::optional<MergePlan> none{};
      co_await StartMerge(parent, pid, none, false);
    }
  } else if (base->Terms().size() >= config_.index_split_threshold) {
    co_await SplitNode(pid);
  }
}

auto
Tree::TakeoverTask(PageId pid) -> Task<bool>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  // the pid may have been freed since the caller looked it up
  const Element *head =
      co_await Do(Site::kHeadRead, [&] { return table_.IsReadable(pid) ? table_.Read(pid) : nullptr; });
  if (head == nullptr) co_return false;
  const auto *notice = PendingNotice(head);
  if (notice == nullptr || !Stale(notice)) co_return false;
  co_return co_await TakeoverNotice(pid, notice);
}

auto
Tree::TakeoverNotice(PageId pid, const Notice *notice) -> Task<bool>
{
  bool done = false;
  switch (notice->Kind()) {
    case ElementKind::kCNotice:
      done = co_await CompleteConsolidation(pid, notice, PageId{});
      break;
    case ElementKind::kSNotice: {
      size_t moved = 0;
      done = co_await ResumeSplit(static_cast<const SplitNotice *>(notice), &moved);
      break;
    }
    default: {
      const auto out = co_await ResumeMerge(static_cast<const MergeNotice *>(notice)->Plan());
      done = out.completed;
      break;
    }
  }
  if (done) counters_.takeovers.fetch_add(1, std::memory_order_relaxed);
  co_return done;
}

auto
Tree::LocateTask(Key key) -> Task<PageId>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  const Probe probe{std::move(key), false};
  auto pos = co_await Descend(probe, Mode::kLocate, 0);
  co_return pos.pid;
}

auto
Tree::PlanMergeTask(PageId dead) -> Task<std::optional<MergePlan>>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  if (!table_.IsLive(dead)) co_return std::nullopt;
  const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(dead); });
  const auto *base = BaseOf(head);
  if (!base->Low()) co_return std::nullopt;
  const Key low = *base->Low();
  const Probe probe{low, true};
  auto pos = co_await Descend(probe, Mode::kLocate, base->Level() + 1);
  if (!pos.pid.Valid()) co_return std::nullopt;
  const auto image = Materialize(pos.head, pos.step.eff_low, pos.step.eff_high, false, std::nullopt, true);
  const auto it = image.terms.find(low);
  if (it == image.terms.end() || it->second != dead) co_return std::nullopt;
  const auto left = it == image.terms.begin() ? image.first_child : std::prev(it)->second;
  co_return MergePlan{pos.pid, left, dead, low};
}

/*##############################################################################
 * Synchronous wrappers
 *############################################################################*/

auto
Tree::Get(const Key &key) -> std::optional<Value>
{
  return sched::RunSync(GetTask(key));
}

void
Tree::Upsert(const Key &key, const Value &value)
{
  sched::RunSync(UpsertTask(key, value));
}

void
Tree::Delete(const Key &key)
{
  sched::RunSync(DeleteTask(key));
}

auto
Tree::RangeScan(const Key &low, const Key &high) -> std::vector<Record>
{
  return sched::RunSync(ScanTask(low, high));
}

auto
Tree::Consolidate(PageId pid) -> bool
{
  return sched::RunSync(ConsolidateTask(pid));
}

auto
Tree::Split(PageId pid) -> bool
{
  return sched::RunSync(SplitTask(pid)).posted;
}

auto
Tree::Merge(const MergePlan &plan) -> bool
{
  return sched::RunSync(MergeTask(plan)).started;
}

auto
Tree::MaybeTakeover(PageId pid) -> bool
{
  return sched::RunSync(TakeoverTask(pid));
}

auto
Tree::LeafOf(const Key &key) -> PageId
{
  return sched::RunSync(LocateTask(key));
}

auto
Tree::PlanMergeOf(PageId dead) -> std::optional<MergePlan>
{
  return sched::RunSync(PlanMergeTask(dead));
}

auto
Tree::Snapshot() -> std::vector<Record>
{
  return sched::RunSync(ScanImpl(Key{}, std::nullopt));
}

/*##############################################################################
 * Helpers
 *############################################################################*/

auto
Tree::Install(PageId pid, const Element *expected, const Element *desired) -> bool
{
  const bool ok = table_.CasInstall(pid, expected, desired);
  if (!ok) counters_.cas_failures[static_cast<size_t>(Site::kCas)].fetch_add(1, std::memory_order_relaxed);
  return ok;
}

auto
Tree::Stale(const Notice *notice) const -> bool
{
  return epochs_.Current() >= notice->OwnerEpoch() + config_.notice_timeout_epochs;
}

void
Tree::RetireChain(const Element *top, const Element *stop)
{
  for (const auto *e = top; e != nullptr && e != stop;) {
    const auto *next = e->Next();
    const bool base = e->Kind() == ElementKind::kBase;
    epochs_.Retire(const_cast<Element *>(e));
    if (base) break;
    e = next;
  }
}

void
Tree::NoteInstalled(PageId pid, const Notice *notice)
{
  if (observer_ != nullptr) observer_->OnNoticeInstalled(pid, notice);
}

void
Tree::NoteReplaced(PageId pid, const Notice *notice, const Element *new_head)
{
  if (observer_ != nullptr) observer_->OnNoticeReplaced(pid, notice, new_head);
}

auto
Tree::Counters() const -> TreeCounters
{
  const auto ld = [](const std::atomic<uint64_t> &a) { return a.load(std::memory_order_relaxed); };
  TreeCounters c{};
  c.consolidations = ld(counters_.consolidations);
  c.cnotice_posts = ld(counters_.cnotice_posts);
  c.cnotice_losses = ld(counters_.cnotice_losses);
  c.snotice_posts = ld(counters_.snotice_posts);
  c.split_losses = ld(counters_.split_losses);
  c.split_aborts = ld(counters_.split_aborts);
  c.splits = ld(counters_.splits);
  c.mnotice_posts = ld(counters_.mnotice_posts);
  c.dnotice_posts = ld(counters_.dnotice_posts);
  c.xnotice_posts = ld(counters_.xnotice_posts);
  c.merges = ld(counters_.merges);
  c.takeovers = ld(counters_.takeovers);
  c.index_posts = ld(counters_.index_posts);
  c.root_grows = ld(counters_.root_grows);
  c.records_moved = ld(counters_.records_moved);
  c.restarts = ld(counters_.restarts);
  c.max_chain = ld(counters_.max_chain);
  for (size_t i = 0; i < c.cas_failures.size(); ++i) c.cas_failures[i] = ld(counters_.cas_failures[i]);
  return c;
}

/*##############################################################################
 * Maintenance
 *############################################################################*/

void
Tree::Quiesce()
{
  sched::ScopedNoYield no_yield;
  bool settled = false;
  for (int round = 0; round < kQuiesceRounds; ++round) {
    for (uint64_t i = 0; i <= config_.notice_timeout_epochs + 2; ++i) {
      epochs_.TryAdvance();
      epochs_.Collect();
    }
    std::vector<PageId> pids;
    table_.ForEachLive([&](PageId pid, const Element *) { pids.push_back(pid); });
    bool changed = false;
    for (const auto pid : pids) {
      const Notice *notice = nullptr;
      size_t deltas = 0;
      {
        auto guard = epochs_.Enter();
        if (!table_.IsLive(pid)) continue;
        const auto *head = table_.Read(pid);
        if (head == nullptr) continue;
        notice = PendingNotice(head);
        deltas = ChainLengthOf(head).data_deltas;
      }
      if (notice != nullptr) {
        sched::RunSync(TakeoverTask(pid));
        changed = true;
      } else if (deltas >= config_.consolidate_threshold) {
        sched::RunSync(ConsolidateTask(pid));
        changed = true;
      }
    }
    if (!changed) {
      settled = true;
      break;
    }
  }
  for (uint64_t i = 0; i < 3; ++i) {
    epochs_.TryAdvance();
    epochs_.Collect();
  }
  // split images are write-only; with no split in flight every entry is dead
  if (settled) buffer_.Compact([](const EntryInfo &) { return false; }, [](uint64_t, uint64_t) {});
}

auto
Tree::Height() -> uint32_t
{
  auto guard = epochs_.Enter();
  return BaseOf(table_.Read(RootPid()))->Level() + 1;
}

/// Writers redirected by a dying right neighbor post its keys here until the merge absorbs them.
auto
Tree::OverflowAllowed(const BaseNode *base, const NodeImage &image) -> bool
{
  const auto side = base->Side();
  if (!side.Valid() || !table_.IsReadable(side)) return false;
  const auto *shead = table_.Read(side);
  const auto *notice = shead == nullptr ? nullptr : PendingNotice(shead);
  if (notice == nullptr || notice->Kind() != ElementKind::kDNotice) return false;
  const auto &high = BaseOf(shead)->High();
  return std::all_of(image.overflow.begin(), image.overflow.end(),
                     [&](const auto &entry) { return !high || entry.first <= *high; });
}

auto
Tree::Validate(bool require_quiescent) -> std::string
{
  auto guard = epochs_.Enter();
  std::ostringstream err;
  constexpr size_t kMaxChain = 1000000;

  table_.ForEachLive([&](PageId pid, const Element *head) {
    if (head == nullptr) return;  // allocated by a split that has not published yet
    size_t n = 0;
    const Element *e = head;
    for (; e != nullptr && e->Kind() != ElementKind::kBase && n < kMaxChain; e = e->Next(), ++n) {
      if (e->Poisoned()) err << "pid " << pid.index << ": chain reaches a reclaimed element\n";
    }
    if (e == nullptr || e->Kind() != ElementKind::kBase) {
      err << "pid " << pid.index << ": chain does not end in a base node\n";
      return;
    }
    if (require_quiescent && PendingNotice(head) != nullptr) {
      err << "pid " << pid.index << ": pending " << ElementKindName(PendingNotice(head)->Kind()) << "\n";
    }
  });
  if (!err.str().empty()) return err.str();

  // walk every level left to right along side links
  PageId leftmost = RootPid();
  for (;;) {
    const auto *top = BaseOf(table_.Read(leftmost));
    const auto level = top->Level();
    Bound prev_high{};
    bool first = true;
    PageId next_leftmost{};
    size_t steps = 0;
    for (PageId pid = leftmost; pid.Valid(); ++steps) {
      if (steps > table_.Capacity()) {
        err << "level " << level << ": side links cycle\n";
        break;
      }
      if (!table_.IsLive(pid)) {
        err << "level " << level << ": side link to dead pid " << pid.index << "\n";
        break;
      }
      const auto *head = table_.Read(pid);
      const auto *b = BaseOf(head);
      if (b->Level() != level) err << "pid " << pid.index << ": level " << b->Level() << " in level " << level << "\n";
      if (first ? b->Low().has_value() : b->Low() != prev_high) {
        err << "pid " << pid.index << ": low " << BoundText(b->Low(), "-inf") << " does not meet left neighbor high "
            << BoundText(prev_high, "-inf") << "\n";
      }
      if (PendingNotice(head) == nullptr) {
        const auto image = Materialize(head, b->Low(), b->High(), true);
        if (!image.overflow.empty() && (require_quiescent || !OverflowAllowed(b, image))) {
          err << "pid " << pid.index << ": keys outside the node range\n";
        }
        if (!b->IsData()) {
          if (first) next_leftmost = image.first_child;
          std::vector<std::pair<Bound, PageId>> children{{b->Low(), image.first_child}};
          for (const auto &[sep, child] : image.terms) children.emplace_back(sep, child);
          for (const auto &[sep, child] : children) {
            if (!table_.IsLive(child)) {
              err << "pid " << pid.index << ": term child " << child.index << " is not live\n";
              continue;
            }
            const auto *cb = BaseOf(table_.Read(child));
            if (cb->Low() != sep) {
              err << "pid " << pid.index << ": child " << child.index << " low " << BoundText(cb->Low(), "-inf")
                  << " differs from separator " << BoundText(sep, "-inf") << "\n";
            }
          }
        }
      } else if (first && !b->IsData()) {
        next_leftmost = b->Terms().front().child;
      }
      prev_high = b->High();
      first = false;
      if (!b->High()) {
        if (b->Side().Valid()) err << "pid " << pid.index << ": infinite high with a side link\n";
        break;
      }
      pid = b->Side();
      if (!pid.Valid()) err << "level " << level << ": finite high " << BoundText(prev_high, "") << " without side\n";
    }
    if (level == 0 || !next_leftmost.Valid()) break;
    leftmost = next_leftmost;
  }
  return err.str();
}

auto
Tree::Dump() -> std::string
{
  auto guard = epochs_.Enter();
  std::ostringstream out;
  PageId leftmost = RootPid();
  for (;;) {
    const auto level = BaseOf(table_.Read(leftmost))->Level();
    out << "level " << level << ":\n";
    PageId next{};
    for (PageId pid = leftmost; pid.Valid();) {
      const auto *head = table_.Read(pid);
      const auto *b = BaseOf(head);
      const auto len = ChainLengthOf(head);
      out << "  pid=" << pid.index << " (" << BoundText(b->Low(), "-inf") << ", " << BoundText(b->High(), "+inf")
          << "] deltas=" << len.data_deltas << " notices=" << len.notices;
      if (b->IsData()) {
        out << " records=" << b->Records().size();
      } else {
        out << " terms=" << b->Terms().size();
        if (!next.Valid()) next = b->Terms().front().child;
      }
      out << "\n";
      pid = b->High() ? b->Side() : PageId{};
    }
    if (level == 0 || !next.Valid()) break;
    leftmost = next;
  }
  return out.str();
}

}  // namespace nkv
