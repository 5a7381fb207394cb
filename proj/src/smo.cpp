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

// Structure modifications: node split and node merge.

#include <iterator>

#include "nkv/tree.hpp"
#include "tree_internal.hpp"

namespace nkv
{
using sched::At;
using sched::Do;
using sched::Site;
using sched::Task;

namespace
{
constexpr int kPostAttempts = 16;
constexpr int kMergeAttempts = 64;

auto
SamePlan(const MergePlan &a, const MergePlan &b) -> bool
{
  return a.parent == b.parent && a.left == b.left && a.dead == b.dead && a.separator == b.separator;
}

/// The pending merge notice of @p kind carrying @p plan at the top of @p head's chain, if any.
auto
OurNotice(const Element *head, ElementKind kind, const MergePlan &plan) -> const MergeNotice *
{
  const auto *n = PendingNotice(head);
  if (n == nullptr || n->Kind() != kind) return nullptr;
  const auto *m = static_cast<const MergeNotice *>(n);
  return SamePlan(m->Plan(), plan) ? m : nullptr;
}

void
DropCopies(const Element *top, const Element *keep)
{
  while (top != keep) {
    const auto *next = top->Next();
    delete top;
    top = next;
  }
}

/// Halves of a split region, exactly as reserved in the log buffer.
auto
SplitImages(const Element *region, const Key &split, PageId new_pid) -> std::pair<NodeImage, NodeImage>
{
  const auto *base = BaseOf(region);
  auto left = Materialize(region, base->Low(), split, false);
  left.side = new_pid;
  auto right = Materialize(region, split, base->High(), true);
  return {std::move(left), std::move(right)};
}
}  // namespace

/*##############################################################################
 * Split
 *############################################################################*/

auto
Tree::SplitTask(PageId pid) -> Task<SplitOutcome>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  co_return co_await SplitNode(pid);
}

auto
Tree::SplitNode(PageId pid) -> Task<SplitOutcome>
{
  SplitOutcome out{};
  const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(pid); });
  if (PendingNotice(head) != nullptr) co_return out;
  const auto *base = BaseOf(head);
  const auto image = Materialize(head, base->Low(), base->High(), true);

  Key split;
  if (base->IsData()) {
    if (image.records.size() < 2) co_return out;
    split = std::next(image.records.begin(), static_cast<std::ptrdiff_t>((image.records.size() - 1) / 2))->first;
  } else {
    const auto n = image.terms.size() + 1;
    if (n < 2) co_return out;
    split = std::next(image.terms.begin(), static_cast<std::ptrdiff_t>(n / 2 - 1))->first;
  }

  const auto npid = table_.Allocate(nullptr);
  const auto [left, right] = SplitImages(head, split, npid);
  const auto bytes = SerializeImage(left).size() + SerializeImage(right).size();
  const auto ticket = co_await Do(Site::kReserve, [&] {
    return buffer_.TryReserve(bytes, EntryKind::kNodeImage, npid.index);
  });
  if (!ticket) {
    table_.ReleaseUnpublished(npid);
    counters_.split_aborts.fetch_add(1, std::memory_order_relaxed);
    co_return out;
  }

  const auto *sn = new SplitNotice{epochs_.Current(), head, split, pid, npid, *ticket};
  table_.StoreUnpublished(npid, sn);
  const bool ok = co_await Do(Site::kCas, [&] { return Install(pid, head, sn); });
  if (!ok) {
    table_.ReleaseUnpublished(npid);
    delete sn;
    // the reservation is abandoned unreleased; compaction discards it
    counters_.split_losses.fetch_add(1, std::memory_order_relaxed);
    co_return out;
  }
  counters_.snotice_posts.fetch_add(1, std::memory_order_relaxed);
  NoteInstalled(npid, sn);
  NoteInstalled(pid, sn);
  out.posted = true;
  out.completed = co_await ResumeSplit(sn, &out.moved);
  co_return out;
}

auto
Tree::ResumeSplit(const SplitNotice *notice, size_t *moved) -> Task<bool>
{
  const auto opid = notice->OldPid();
  const auto npid = notice->NewPid();
  const auto *region = notice->Next();
  const auto *rbase = BaseOf(region);
  const auto &split = notice->SplitKey();

  // new node: (split, high] with any overflow, keeping the old side link
  for (;;) {
    const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(npid); });
    bool found = false;
    const auto above = DeltasAbove(head, notice, &found);
    if (!found) break;
    const auto image = Materialize(region, split, rbase->High(), true);
    const auto built = BuildChain(image);
    const auto *fresh = RelinkCopies(above, built.top);
    const bool ok = co_await Do(Site::kCas, [&] { return Install(npid, head, fresh); });
    if (ok) {
      NoteReplaced(npid, notice, fresh);
      RetireChain(head, notice);
      *moved += image.Size();
      counters_.records_moved.fetch_add(image.Size(), std::memory_order_relaxed);
      break;
    }
    DropCopies(fresh, built.top);
    DeleteUnpublished(built.top);
  }

  // old node: (low, split] pointing at the new node
  bool won = false;
  for (;;) {
    const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(opid); });
    bool found = false;
    const auto above = DeltasAbove(head, notice, &found);
    if (!found) break;
    auto image = Materialize(region, rbase->Low(), split, false);
    image.side = npid;
    const auto built = BuildChain(image);
    const auto *fresh = RelinkCopies(above, built.top);
    const bool ok = co_await Do(Site::kCas, [&] { return Install(opid, head, fresh); });
    if (ok) {
      NoteReplaced(opid, notice, fresh);
      const auto [left, right] = SplitImages(region, split, npid);
      auto ticket = notice->Ticket();
      buffer_.WriteAndRelease(ticket, SerializeImage(left) + SerializeImage(right));
      RetireChain(head, nullptr);
      counters_.splits.fetch_add(1, std::memory_order_relaxed);
      won = true;
      break;
    }
    DropCopies(fresh, built.top);
    DeleteUnpublished(built.top);
  }

  if (won) co_await PostIndexTerm(rbase->Level() + 1, split, npid, opid);
  co_return won;
}

auto
Tree::PostIndexTerm(uint32_t level, Key sep, PageId child, PageId left) -> Task<bool>
{
  for (int attempt = 0; attempt < kPostAttempts; ++attempt) {
    PageId root = co_await Do(Site::kRootRead, [this] { return root_.load(std::memory_order_seq_cst); });
    const Element *rhead = co_await Do(Site::kHeadRead, [&] { return table_.Read(root); });
    if (BaseOf(rhead)->Level() < level) {
      if (!left.Valid() || root != left) co_return false;
      const auto *grown = new BaseNode{NodeKind::kIndex, level, std::nullopt, std::nullopt, PageId{}, {},
                                       {IndexTerm{Key{}, left}, IndexTerm{sep, child}}};
      const auto rpid = table_.Allocate(grown);
      const bool ok = co_await Do(Site::kRootCas, [&] {
        auto expected = root;
        return root_.compare_exchange_strong(expected, rpid, std::memory_order_seq_cst);
      });
      if (ok) {
        counters_.root_grows.fetch_add(1, std::memory_order_relaxed);
        counters_.index_posts.fetch_add(1, std::memory_order_relaxed);
        co_return true;
      }
      counters_.cas_failures[static_cast<size_t>(Site::kRootCas)].fetch_add(1, std::memory_order_relaxed);
      table_.ReleaseUnpublished(rpid);
      delete grown;
      continue;
    }

    const Probe probe{sep, false};
    auto pos = co_await Descend(probe, Mode::kLocate, level);
    if (!pos.pid.Valid()) continue;
    const auto &st = pos.step;
    if (st.notice != nullptr && st.notice->Kind() == ElementKind::kMNotice) co_return false;
    if (!ProbeAbove(Probe{sep, false}, st.eff_low) || (st.eff_high && sep >= *st.eff_high)) co_return false;
    const auto image = Materialize(pos.head, st.eff_low, st.eff_high, false, std::nullopt, true);
    if (image.terms.contains(sep)) co_return true;

    const Element *chead = co_await Do(Site::kHeadRead, [&] { return table_.Read(child); });
    const auto *cnotice = PendingNotice(chead);
    if (cnotice != nullptr && cnotice->Kind() == ElementKind::kDNotice) co_return false;
    if (BaseOf(chead)->Low() != Bound{sep}) co_return false;

    const auto *delta = new IndexEntryDelta{sep, child, pos.head};
    const bool consolidate = config_.auto_smo && st.notice == nullptr &&
                             st.data_deltas + 1 >= config_.consolidate_threshold;
    const Notice *notice = consolidate ? new ConsolidateNotice{epochs_.Current(), delta} : nullptr;
    const Element *top = notice != nullptr ? static_cast<const Element *>(notice) : delta;
    const bool ok = co_await Do(Site::kCas, [&] { return Install(pos.pid, pos.head, top); });
    if (!ok) {
      delete notice;
      delete delta;
      continue;
    }
    counters_.index_posts.fetch_add(1, std::memory_order_relaxed);
    if (notice != nullptr) {
      counters_.cnotice_posts.fetch_add(1, std::memory_order_relaxed);
      NoteInstalled(pos.pid, notice);
      co_await CompleteConsolidation(pos.pid, notice, PageId{});
    }
    co_return true;
  }
  co_return false;
}

/*##############################################################################
 * Merge
 *############################################################################*/

auto
Tree::MergeTask(MergePlan plan) -> Task<MergeOutcome>
{
  co_await At(Site::kGuardEnter);
  auto guard = epochs_.Enter();
  const auto parent = plan.parent;
  const auto dead = plan.dead;
  const std::optional<MergePlan> given{std::move(plan)};
  co_return co_await StartMerge(parent, dead, given, true);
}

auto
Tree::StartMerge(PageId parent, PageId dead, std::optional<MergePlan> given, bool strict) -> Task<MergeOutcome>
{
  MergeOutcome out{};
  if (!table_.IsLive(parent) || !table_.IsLive(dead)) {
    if (strict) throw IneligibleMergeError{"merge names a pid that is not live"};
    co_return out;
  }
  const Element *phead = co_await Do(Site::kHeadRead, [&] { return table_.Read(parent); });
  const auto *pb = BaseOf(phead);
  if (pb->IsData() || pb->Level() != 1) {
    if (strict) throw IneligibleMergeError{"parent is not a lowest-level index node"};
    co_return out;
  }
  if (PendingNotice(phead) != nullptr) co_return out;
  const auto pimg = Materialize(phead, pb->Low(), pb->High(), false);
  auto it = pimg.terms.begin();
  while (it != pimg.terms.end() && it->second != dead) ++it;
  if (it == pimg.terms.end()) {
    if (strict) throw IneligibleMergeError{"node has no term after the first in its parent"};
    co_return out;
  }
  MergePlan plan{parent, it == pimg.terms.begin() ? pimg.first_child : std::prev(it)->second, dead, it->first};
  if (given && !SamePlan(*given, plan)) {
    if (strict) throw IneligibleMergeError{"merge plan does not match the parent"};
    co_return out;
  }

  const Element *lhead = co_await Do(Site::kHeadRead, [&] { return table_.Read(plan.left); });
  if (BaseOf(lhead)->Side() != dead) co_return out;
  const Element *dhead = co_await Do(Site::kHeadRead, [&] { return table_.Read(dead); });
  const auto *db = BaseOf(dhead);
  if (!db->IsData()) {
    if (strict) throw IneligibleMergeError{"only data nodes merge"};
    co_return out;
  }
  if (PendingNotice(dhead) != nullptr) co_return out;
  if (LogicalView(dhead).size() >= config_.merge_threshold) {
    if (strict) throw IneligibleMergeError{"node is not underfull"};
    co_return out;
  }

  const auto *mn = new MergeNotice{ElementKind::kMNotice, epochs_.Current(), phead, plan, db->High()};
  const bool ok = co_await Do(Site::kCas, [&] { return Install(parent, phead, mn); });
  if (!ok) {
    delete mn;
    co_return out;
  }
  counters_.mnotice_posts.fetch_add(1, std::memory_order_relaxed);
  NoteInstalled(parent, mn);
  out = co_await ResumeMerge(plan);
  out.started = true;
  co_return out;
}

auto
Tree::ResumeMerge(MergePlan plan) -> Task<MergeOutcome>
{
  MergeOutcome out{};

  // freeze the dying node
  const MergeNotice *dn = nullptr;
  for (int attempt = 0; dn == nullptr; ++attempt) {
    if (attempt >= kMergeAttempts) {
      out.deferred = true;
      co_return out;
    }
    const Element *dhead = co_await Do(Site::kHeadRead, [&] { return table_.Read(plan.dead); });
    dn = OurNotice(dhead, ElementKind::kDNotice, plan);
    if (dn != nullptr) break;
    const Element *phead = co_await Do(Site::kHeadRead, [&] { return table_.Read(plan.parent); });
    if (OurNotice(phead, ElementKind::kMNotice, plan) == nullptr) co_return out;
    if (PendingNotice(dhead) != nullptr) {
      out.deferred = true;
      co_return out;
    }
    const auto *n =
        new MergeNotice{ElementKind::kDNotice, epochs_.Current(), dhead, plan, BaseOf(dhead)->High()};
    const bool ok = co_await Do(Site::kCas, [&] { return Install(plan.dead, dhead, n); });
    if (!ok) {
      delete n;
      continue;
    }
    counters_.dnotice_posts.fetch_add(1, std::memory_order_relaxed);
    NoteInstalled(plan.dead, n);
    dn = n;
  }

  // announce at the left neighbor that currently owns the separator
  PageId xpid{};
  const MergeNotice *xn = nullptr;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= kMergeAttempts) {
      out.deferred = true;
      co_return out;
    }
    const Probe probe{plan.separator, false};
    auto pos = co_await Descend(probe, Mode::kLocate, 0);
    const auto *xb = BaseOf(pos.head);
    if (xb->Side() != plan.dead) break;  // already absorbed
    xn = OurNotice(pos.head, ElementKind::kXNotice, plan);
    if (xn != nullptr) {
      xpid = pos.pid;
      break;
    }
    if (PendingNotice(pos.head) != nullptr) {
      out.deferred = true;
      co_return out;
    }
    const auto *n =
        new MergeNotice{ElementKind::kXNotice, epochs_.Current(), pos.head, plan, BaseOf(dn->Next())->High()};
    const bool ok = co_await Do(Site::kCas, [&] { return Install(pos.pid, pos.head, n); });
    if (!ok) {
      delete n;
      continue;
    }
    counters_.xnotice_posts.fetch_add(1, std::memory_order_relaxed);
    NoteInstalled(pos.pid, n);
    xn = n;
    xpid = pos.pid;
    break;
  }

  // absorb the dying node's range into the left neighbor
  if (xn != nullptr) {
    const auto *xb = BaseOf(xn->Next());
    const auto *db = BaseOf(dn->Next());
    for (;;) {
      const Element *head = co_await Do(Site::kHeadRead, [&] { return table_.Read(xpid); });
      bool found = false;
      const auto above = DeltasAbove(head, xn, &found);
      if (!found) break;
      auto merged = Materialize(xn->Next(), xb->Low(), xb->High(), true);
      auto dimg = Materialize(dn->Next(), db->Low(), db->High(), true);
      auto overflow = std::move(dimg.overflow);
      for (auto &[k, v] : merged.overflow) {
        if (InRange(k, db->Low(), db->High())) {
          if (v) {
            dimg.records[k] = *v;
          } else {
            dimg.records.erase(k);
          }
        } else {
          overflow[k] = v;
        }
      }
      merged.records.merge(dimg.records);
      merged.overflow = std::move(overflow);
      merged.high = db->High();
      merged.side = db->Side();
      const auto built = BuildChain(merged);
      const auto *fresh = RelinkCopies(above, built.top);
      const bool ok = co_await Do(Site::kCas, [&] { return Install(xpid, head, fresh); });
      if (ok) {
        NoteReplaced(xpid, xn, fresh);
        RetireChain(head, nullptr);
        counters_.records_moved.fetch_add(db->Records().size(), std::memory_order_relaxed);
        break;
      }
      DropCopies(fresh, built.top);
      DeleteUnpublished(built.top);
    }
  }

  // drop the dying node's term from the parent
  for (;;) {
    const Element *phead = co_await Do(Site::kHeadRead, [&] { return table_.Read(plan.parent); });
    const auto *mn = OurNotice(phead, ElementKind::kMNotice, plan);
    if (mn == nullptr) break;
    bool found = false;
    const auto above = DeltasAbove(phead, mn, &found);
    const auto *pb = BaseOf(phead);
    const auto image = Materialize(mn->Next(), pb->Low(), pb->High(), false,
                                   std::make_pair(plan.separator, plan.dead));
    const auto built = BuildChain(image);
    const auto *fresh = RelinkCopies(above, built.top);
    const bool ok = co_await Do(Site::kCas, [&] { return Install(plan.parent, phead, fresh); });
    if (ok) {
      NoteReplaced(plan.parent, mn, fresh);
      RetireChain(phead, nullptr);
      counters_.merges.fetch_add(1, std::memory_order_relaxed);
      out.completed = true;
      break;
    }
    DropCopies(fresh, built.top);
    DeleteUnpublished(built.top);
  }

  // free the dying node; its frozen chain goes with it
  if (table_.TryFree(plan.dead)) {
    NoteReplaced(plan.dead, dn, nullptr);
    RetireChain(dn, nullptr);
  }
  co_return out;
}

}  // namespace nkv
