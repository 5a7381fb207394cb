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

#include "nkv/mapping_table.hpp"

#include <algorithm>
#include <stdexcept>

#include "nkv/contract.hpp"

namespace nkv
{
MappingTable::MappingTable(EpochManager &epochs, size_t capacity)
    : epochs_{epochs}, capacity_{capacity}, slots_{std::make_unique<Slot[]>(capacity)}
{
  if (capacity == 0 || capacity >= ~uint32_t{0}) throw std::invalid_argument{"bad mapping table capacity"};
}

MappingTable::~MappingTable() { epochs_.DrainAll(); }

auto
MappingTable::Allocate(const Element *initial) -> PageId
{
  auto pid = PopFree();
  if (!pid.Valid()) {
    const auto idx = bump_.fetch_add(1, std::memory_order_relaxed);
    if (idx >= capacity_) {
      bump_.fetch_sub(1, std::memory_order_relaxed);
      throw TableFullError{};
    }
    pid = PageId{static_cast<uint32_t>(idx)};
  }
  auto &slot = slots_[pid.index];
  slot.head.store(initial, std::memory_order_relaxed);
  slot.state.store(kLive, std::memory_order_release);
  live_.fetch_add(1, std::memory_order_relaxed);
  return pid;
}

void
MappingTable::StoreUnpublished(PageId pid, const Element *head)
{
  NKV_CONTRACT(IsLive(pid), "store into a dead pid");
  slots_[pid.index].head.store(head, std::memory_order_release);
}

void
MappingTable::ReleaseUnpublished(PageId pid)
{
  NKV_CONTRACT(IsLive(pid), "release of a dead pid");
  auto &slot = slots_[pid.index];
  slot.head.store(nullptr, std::memory_order_relaxed);
  slot.state.store(kRetired, std::memory_order_relaxed);
  live_.fetch_sub(1, std::memory_order_relaxed);
  PushFree(pid);
}

auto
MappingTable::Read(PageId pid) const -> const Element *
{
  NKV_CONTRACT(pid.Valid() && pid.index < capacity_, "pid out of range");
  const auto &slot = slots_[pid.index];
  NKV_CONTRACT(slot.state.load(std::memory_order_acquire) != kFree, "read of a freed pid");
  return slot.head.load(std::memory_order_seq_cst);
}

auto
MappingTable::CasInstall(PageId pid, const Element *expected, const Element *desired) -> bool
{
  NKV_CONTRACT(pid.Valid() && pid.index < capacity_, "pid out of range");
  return slots_[pid.index].head.compare_exchange_strong(expected, desired, std::memory_order_seq_cst);
}

void
MappingTable::Free(PageId pid)
{
  const bool freed = TryFree(pid);
  NKV_CONTRACT(freed, "pid freed twice");
}

auto
MappingTable::TryFree(PageId pid) -> bool
{
  uint8_t expected = kLive;
  if (!slots_[pid.index].state.compare_exchange_strong(expected, kRetired, std::memory_order_acq_rel)) return false;
  live_.fetch_sub(1, std::memory_order_relaxed);
  epochs_.Retire(new PidRelease{this, pid});
  return true;
}

auto
MappingTable::IsLive(PageId pid) const -> bool
{
  return pid.Valid() && pid.index < capacity_ && slots_[pid.index].state.load(std::memory_order_acquire) == kLive;
}

auto
MappingTable::IsReadable(PageId pid) const -> bool
{
  return pid.Valid() && pid.index < capacity_ && slots_[pid.index].state.load(std::memory_order_acquire) != kFree;
}

void
MappingTable::PushFree(PageId pid)
{
  auto &slot = slots_[pid.index];
  slot.head.store(nullptr, std::memory_order_relaxed);
  slot.state.store(kFree, std::memory_order_release);
  auto head = free_head_.load(std::memory_order_acquire);
  for (;;) {
    slot.next_free.store(static_cast<uint32_t>(head & 0xffffffffU), std::memory_order_relaxed);
    const auto desired = (((head >> 32U) + 1) << 32U) | (pid.index + 1U);
    if (free_head_.compare_exchange_weak(head, desired, std::memory_order_acq_rel)) return;
  }
}

auto
MappingTable::PopFree() -> PageId
{
  auto head = free_head_.load(std::memory_order_acquire);
  for (;;) {
    const auto top = static_cast<uint32_t>(head & 0xffffffffU);
    if (top == 0) return kNullPid;
    const auto next = slots_[top - 1].next_free.load(std::memory_order_relaxed);
    const auto desired = (((head >> 32U) + 1) << 32U) | next;
    if (free_head_.compare_exchange_weak(head, desired, std::memory_order_acq_rel)) return PageId{top - 1};
  }
}

auto
MappingTable::FreeListSize() const -> size_t
{
  size_t n = 0;
  auto top = static_cast<uint32_t>(free_head_.load(std::memory_order_acquire) & 0xffffffffU);
  while (top != 0) {
    ++n;
    top = slots_[top - 1].next_free.load(std::memory_order_relaxed);
  }
  return n;
}

void
MappingTable::ForEachLive(const std::function<void(PageId, const Element *)> &fn) const
{
  const auto end = std::min(bump_.load(std::memory_order_acquire), capacity_);
  for (size_t i = 0; i < end; ++i) {
    if (slots_[i].state.load(std::memory_order_acquire) != kLive) continue;
    fn(PageId{static_cast<uint32_t>(i)}, slots_[i].head.load(std::memory_order_acquire));
  }
}

}  // namespace nkv
