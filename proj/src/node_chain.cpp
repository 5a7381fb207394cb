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

#include "nkv/node_chain.hpp"

#include <algorithm>
#include <cstring>

#include "nkv/contract.hpp"

namespace nkv
{
auto
ElementKindName(ElementKind kind) -> const char *
{
  switch (kind) {
    case ElementKind::kBase:
      return "base";
    case ElementKind::kInsert:
      return "insert";
    case ElementKind::kUpdate:
      return "update";
    case ElementKind::kDelete:
      return "delete";
    case ElementKind::kIndexEntry:
      return "index_entry";
    case ElementKind::kCNotice:
      return "cNOTICE";
    case ElementKind::kSNotice:
      return "sNOTICE";
    case ElementKind::kMNotice:
      return "mNOTICE";
    case ElementKind::kDNotice:
      return "dNOTICE";
    case ElementKind::kXNotice:
      return "xNOTICE";
  }
  return "?";
}

auto
ProbeAbove(const Probe &probe, const Bound &low) -> bool
{
  if (!low) return true;
  const auto c = probe.key.compare(*low);
  return c > 0 || (c == 0 && probe.after);
}

auto
ProbeWithin(const Probe &probe, const Bound &high) -> bool
{
  if (!high) return true;
  const auto c = probe.key.compare(*high);
  return c < 0 || (c == 0 && !probe.after);
}

auto
InRange(const Key &key, const Bound &low, const Bound &high) -> bool
{
  return (!low || key > *low) && (!high || key <= *high);
}

/*##############################################################################
 * Elements
 *############################################################################*/

BaseNode::BaseNode(NodeKind node_kind,
                   uint32_t level,
                   Bound low,
                   Bound high,
                   PageId side,
                   std::vector<Record> records,
                   std::vector<IndexTerm> terms)
    : Element{ElementKind::kBase, nullptr},
      node_kind_{node_kind},
      level_{level},
      low_{std::move(low)},
      high_{std::move(high)},
      side_{side},
      records_{std::move(records)},
      terms_{std::move(terms)}
{
  NKV_CONTRACT(node_kind_ == NodeKind::kData || !terms_.empty(), "index node without terms");
}

auto
BaseNode::Find(const Key &key) const -> const Record *
{
  const auto it = std::lower_bound(records_.begin(), records_.end(), key,
                                   [](const Record &r, const Key &k) { return r.key < k; });
  if (it == records_.end() || it->key != key) return nullptr;
  return &*it;
}

auto
BaseNode::RouteTerm(const Probe &probe) const -> size_t
{
  // terms_[0] covers everything down to the node's low bound
  size_t lo = 1;
  size_t hi = terms_.size();
  while (lo < hi) {
    const auto mid = (lo + hi) / 2;
    if (ProbeAbove(probe, terms_[mid].sep)) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo - 1;
}

RecordDelta::RecordDelta(ElementKind kind, Key key, Value value, const Element *next)
    : Element{kind, next}, key_{std::move(key)}, value_{std::move(value)}
{
  NKV_CONTRACT(IsRecordDelta(kind), "record delta with a non-record kind");
}

/*##############################################################################
 * Chain operations
 *############################################################################*/

auto
Prepend(const Element *head, const Element *element) -> const Element *
{
  NKV_CONTRACT(element->Next() == head, "prepended element does not link to the head");
  return element;
}

auto
ChainLengthOf(const Element *head) -> ChainLength
{
  ChainLength len{};
  for (const auto *e = head; e->Kind() != ElementKind::kBase; e = e->Next()) {
    if (IsNotice(e->Kind())) {
      ++len.notices;
    } else {
      ++len.data_deltas;
    }
  }
  return len;
}

auto
BaseOf(const Element *head) -> const BaseNode *
{
  const auto *e = head;
  while (e->Kind() != ElementKind::kBase) e = e->Next();
  return static_cast<const BaseNode *>(e);
}

auto
PendingNotice(const Element *head) -> const Notice *
{
  for (const auto *e = head; e->Kind() != ElementKind::kBase; e = e->Next()) {
    if (IsNotice(e->Kind())) return static_cast<const Notice *>(e);
  }
  return nullptr;
}

auto
SearchChain(const Element *head, const Key &key, ChainContext ctx) -> LookupResult
{
  using Status = LookupResult::Status;
  const Probe probe{key, false};
  for (const auto *e = head;; e = e->Next()) {
    switch (e->Kind()) {
      case ElementKind::kInsert:
      case ElementKind::kUpdate:
      case ElementKind::kDelete: {
        const auto *d = static_cast<const RecordDelta *>(e);
        if (d->GetKey() != key) break;
        if (d->IsDelete()) return {Status::kAbsent, {}, {}};
        return {Status::kFound, d->GetValue(), {}};
      }
      case ElementKind::kSNotice: {
        const auto *sn = static_cast<const SplitNotice *>(e);
        if (ctx.pid.Valid() && ctx.pid == sn->NewPid()) {
          if (key <= sn->SplitKey()) return {Status::kRedirect, {}, sn->OldPid()};
        } else if (key > sn->SplitKey()) {
          return {Status::kRedirect, {}, sn->NewPid()};
        }
        break;
      }
      case ElementKind::kDNotice:
        if (!ctx.via_side) return {Status::kRedirect, {}, static_cast<const MergeNotice *>(e)->RedirectTo()};
        break;
      case ElementKind::kBase: {
        const auto *base = static_cast<const BaseNode *>(e);
        if (!ProbeWithin(probe, base->High()) && base->Side().Valid()) return {Status::kRedirect, {}, base->Side()};
        if (!base->IsData()) return {Status::kRedirect, {}, base->Terms()[base->RouteTerm(probe)].child};
        const auto *rec = base->Find(key);
        if (rec == nullptr) return {Status::kAbsent, {}, {}};
        return {Status::kFound, rec->value, {}};
      }
      default:
        break;
    }
  }
}

auto
LogicalView(const Element *head) -> std::vector<Record>
{
  std::vector<const RecordDelta *> deltas;
  const auto *e = head;
  for (; e->Kind() != ElementKind::kBase; e = e->Next()) {
    if (e->Kind() == ElementKind::kSNotice || e->Kind() == ElementKind::kDNotice) {
      throw UnresolvedNoticeError{std::string{"chain holds a redirecting "} + ElementKindName(e->Kind())};
    }
    if (IsRecordDelta(e->Kind())) deltas.push_back(static_cast<const RecordDelta *>(e));
  }
  std::map<Key, Value> view;
  for (const auto &r : static_cast<const BaseNode *>(e)->Records()) view.emplace(r.key, r.value);
  for (auto it = deltas.rbegin(); it != deltas.rend(); ++it) {
    if ((*it)->IsDelete()) {
      view.erase((*it)->GetKey());
    } else {
      view[(*it)->GetKey()] = (*it)->GetValue();
    }
  }
  std::vector<Record> out;
  out.reserve(view.size());
  for (auto &[k, v] : view) out.push_back(Record{k, v});
  return out;
}

namespace
{
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

void
Mix(uint64_t &h, const void *data, size_t len)
{
  const auto *p = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void
MixStr(uint64_t &h, const std::string &s)
{
  const auto n = s.size();
  Mix(h, &n, sizeof(n));
  Mix(h, s.data(), n);
}

void
MixPid(uint64_t &h, PageId pid)
{
  Mix(h, &pid.index, sizeof(pid.index));
}

void
MixBound(uint64_t &h, const Bound &b)
{
  const uint8_t present = b ? 1 : 0;
  Mix(h, &present, 1);
  if (b) MixStr(h, *b);
}
}  // namespace

auto
ChainChecksum(const Element *head) -> uint64_t
{
  uint64_t h = kFnvOffset;
  for (const auto *e = head; e != nullptr; e = e->Next()) {
    const auto kind = static_cast<uint8_t>(e->Kind());
    Mix(h, &kind, 1);
    switch (e->Kind()) {
      case ElementKind::kInsert:
      case ElementKind::kUpdate:
      case ElementKind::kDelete: {
        const auto *d = static_cast<const RecordDelta *>(e);
        MixStr(h, d->GetKey());
        MixStr(h, d->GetValue());
        break;
      }
      case ElementKind::kIndexEntry: {
        const auto *d = static_cast<const IndexEntryDelta *>(e);
        MixStr(h, d->Sep());
        MixPid(h, d->Child());
        break;
      }
      case ElementKind::kSNotice: {
        const auto *sn = static_cast<const SplitNotice *>(e);
        MixStr(h, sn->SplitKey());
        MixPid(h, sn->OldPid());
        MixPid(h, sn->NewPid());
        break;
      }
      case ElementKind::kMNotice:
      case ElementKind::kDNotice:
      case ElementKind::kXNotice: {
        const auto &plan = static_cast<const MergeNotice *>(e)->Plan();
        MixPid(h, plan.dead);
        MixStr(h, plan.separator);
        break;
      }
      case ElementKind::kBase: {
        const auto *b = static_cast<const BaseNode *>(e);
        MixBound(h, b->Low());
        MixBound(h, b->High());
        MixPid(h, b->Side());
        for (const auto &r : b->Records()) {
          MixStr(h, r.key);
          MixStr(h, r.value);
        }
        for (const auto &t : b->Terms()) {
          MixStr(h, t.sep);
          MixPid(h, t.child);
        }
        break;
      }
      case ElementKind::kCNotice:
        break;
    }
  }
  return h;
}

/*##############################################################################
 * Materialization
 *############################################################################*/

namespace
{
auto
AboveHigh(const Key &key, const Bound &high) -> bool
{
  return high && key > *high;
}
}  // namespace

auto
Materialize(const Element *region,
            const Bound &low,
            const Bound &high,
            bool keep_overflow,
            const std::optional<std::pair<Key, PageId>> &dead,
            bool skip_notices) -> NodeImage
{
  std::vector<const Element *> deltas;
  const auto *e = region;
  for (; e->Kind() != ElementKind::kBase; e = e->Next()) {
    if (e->Kind() == ElementKind::kCNotice || (skip_notices && IsNotice(e->Kind()))) continue;
    if (IsNotice(e->Kind())) throw UnresolvedNoticeError{"region below a notice holds another notice"};
    deltas.push_back(e);
  }
  const auto *base = static_cast<const BaseNode *>(e);

  NodeImage image{};
  image.kind = base->GetNodeKind();
  image.level = base->Level();
  image.low = low;
  image.high = high;
  image.side = base->Side();

  if (base->IsData()) {
    for (const auto &r : base->Records()) {
      if (InRange(r.key, low, high)) {
        image.records.emplace(r.key, r.value);
      } else if (keep_overflow && AboveHigh(r.key, high)) {
        image.overflow.emplace(r.key, r.value);
      }
    }
    for (auto it = deltas.rbegin(); it != deltas.rend(); ++it) {
      if (!IsRecordDelta((*it)->Kind())) continue;
      const auto *d = static_cast<const RecordDelta *>(*it);
      if (InRange(d->GetKey(), low, high)) {
        if (d->IsDelete()) {
          image.records.erase(d->GetKey());
        } else {
          image.records[d->GetKey()] = d->GetValue();
        }
      } else if (keep_overflow && AboveHigh(d->GetKey(), high)) {
        image.overflow[d->GetKey()] = d->IsDelete() ? std::nullopt : std::optional<Value>{d->GetValue()};
      }
    }
    return image;
  }

  // index: gather every term, then cut to [low, high)
  const auto &bterms = base->Terms();
  PageId first = bterms.front().child;
  std::map<Key, PageId> all;
  for (size_t i = 1; i < bterms.size(); ++i) all[bterms[i].sep] = bterms[i].child;
  for (auto it = deltas.rbegin(); it != deltas.rend(); ++it) {
    if ((*it)->Kind() != ElementKind::kIndexEntry) continue;
    const auto *d = static_cast<const IndexEntryDelta *>(*it);
    all[d->Sep()] = d->Child();
  }
  if (dead) {
    const auto it = all.find(dead->first);
    if (it != all.end() && it->second == dead->second) all.erase(it);
  }

  image.first_child = first;
  if (low) {
    // the term covering the keys just above the new low
    auto it = all.upper_bound(*low);
    if (it != all.begin()) image.first_child = std::prev(it)->second;
  }
  for (const auto &[sep, child] : all) {
    if (low && sep <= *low) continue;
    if (high && sep >= *high) continue;
    image.terms.emplace(sep, child);
  }
  return image;
}

auto
MaterializeRegion(const Element *region) -> NodeImage
{
  const auto *base = BaseOf(region);
  return Materialize(region, base->Low(), base->High(), true);
}

auto
BuildChain(const NodeImage &image) -> BuiltChain
{
  std::vector<Record> records;
  std::vector<IndexTerm> terms;
  if (image.kind == NodeKind::kData) {
    records.reserve(image.records.size());
    for (const auto &[k, v] : image.records) records.push_back(Record{k, v});
  } else {
    terms.reserve(image.terms.size() + 1);
    terms.push_back(IndexTerm{image.low.value_or(Key{}), image.first_child});
    for (const auto &[sep, child] : image.terms) terms.push_back(IndexTerm{sep, child});
  }
  const auto *base =
      new BaseNode{image.kind, image.level, image.low, image.high, image.side, std::move(records), std::move(terms)};
  const Element *top = base;
  for (const auto &[k, v] : image.overflow) {
    top = v ? new RecordDelta{ElementKind::kInsert, k, *v, top} : new RecordDelta{ElementKind::kDelete, k, {}, top};
  }
  return BuiltChain{base, top};
}

void
DeleteUnpublished(const Element *top, const Element *stop)
{
  const auto *e = top;
  while (e != nullptr) {
    const auto *next = e->Next();
    const bool last = (e == stop) || e->Kind() == ElementKind::kBase;
    delete e;
    if (last) break;
    e = next;
  }
}

auto
DeltasAbove(const Element *head, const Element *notice, bool *found) -> std::vector<const Element *>
{
  std::vector<const Element *> above;
  *found = false;
  for (const auto *e = head; e != nullptr; e = e->Next()) {
    if (e == notice) {
      *found = true;
      return above;
    }
    if (e->Kind() == ElementKind::kBase) break;
    above.push_back(e);
  }
  above.clear();
  return above;
}

auto
RelinkCopies(const std::vector<const Element *> &deltas, const Element *onto) -> const Element *
{
  const Element *top = onto;
  for (auto it = deltas.rbegin(); it != deltas.rend(); ++it) {
    const auto *d = *it;
    if (IsRecordDelta(d->Kind())) {
      const auto *rd = static_cast<const RecordDelta *>(d);
      top = new RecordDelta{rd->Kind(), rd->GetKey(), rd->GetValue(), top};
    } else if (d->Kind() == ElementKind::kIndexEntry) {
      const auto *id = static_cast<const IndexEntryDelta *>(d);
      top = new IndexEntryDelta{id->Sep(), id->Child(), top};
    } else {
      NKV_CONTRACT(false, "a notice sits above another pending notice");
    }
  }
  return top;
}

/*##############################################################################
 * Serialization
 *############################################################################*/

namespace
{
void
PutU32(std::string &out, uint32_t v)
{
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void
PutStr(std::string &out, const std::string &s)
{
  PutU32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

void
PutBound(std::string &out, const Bound &b)
{
  out.push_back(b ? 1 : 0);
  if (b) PutStr(out, *b);
}
}  // namespace

auto
SerializeImage(const NodeImage &image) -> std::string
{
  std::string out;
  out.push_back(static_cast<char>(image.kind));
  PutU32(out, image.level);
  PutBound(out, image.low);
  PutBound(out, image.high);
  PutU32(out, image.side.index);
  if (image.kind == NodeKind::kData) {
    PutU32(out, static_cast<uint32_t>(image.records.size()));
    for (const auto &[k, v] : image.records) {
      PutStr(out, k);
      PutStr(out, v);
    }
  } else {
    PutU32(out, static_cast<uint32_t>(image.terms.size() + 1));
    PutStr(out, image.low.value_or(Key{}));
    PutU32(out, image.first_child.index);
    for (const auto &[sep, child] : image.terms) {
      PutStr(out, sep);
      PutU32(out, child.index);
    }
  }
  return out;
}

}  // namespace nkv
