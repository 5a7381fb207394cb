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

#ifndef NKV_MAPPING_TABLE_HPP
#define NKV_MAPPING_TABLE_HPP

// C++ standard libraries
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>

// local sources
#include "nkv/epoch.hpp"

namespace nkv
{
class Element;

struct PageId {
  uint32_t index{~uint32_t{0}};

  [[nodiscard]] constexpr auto Valid() const -> bool { return index != ~uint32_t{0}; }
  constexpr auto operator==(const PageId &) const -> bool = default;
  constexpr auto operator<(const PageId &rhs) const -> bool { return index < rhs.index; }
};

inline constexpr PageId kNullPid{};

class TableFullError : public std::runtime_error
{
 public:
  TableFullError() : std::runtime_error{"mapping table is full"} {}
};

/**
 * @brief Fixed-capacity PID -> chain head indirection.
 *
 * A freed PID stays readable (it keeps its last chain) until the epoch
 * facility reclaims it; only then does it return to the free list. Reading a
 * free slot is a contract violation.
 */
class MappingTable
{
 public:
  static constexpr size_t kDefaultCapacity = size_t{1} << 20;

  explicit MappingTable(EpochManager &epochs, size_t capacity = kDefaultCapacity);
  MappingTable(const MappingTable &) = delete;
  auto operator=(const MappingTable &) -> MappingTable & = delete;
  /// Drains the epoch manager: pending slot releases still point at this table.
  ~MappingTable();

  /// Reserves a slot holding @p initial; the caller publishes the PID later.
  auto Allocate(const Element *initial = nullptr) -> PageId;

  /// Sets the head of a slot that no other thread can reach yet.
  void StoreUnpublished(PageId pid, const Element *head);

  /// Returns a never-published slot to the free list immediately.
  void ReleaseUnpublished(PageId pid);

  [[nodiscard]] auto Read(PageId pid) const -> const Element *;

  auto CasInstall(PageId pid, const Element *expected, const Element *desired) -> bool;

  /// Retires @p pid; it returns to the free list once reclamation is safe.
  void Free(PageId pid);

  /// Idempotent Free(): returns true only for the caller that retired the slot.
  auto TryFree(PageId pid) -> bool;

  [[nodiscard]] auto IsLive(PageId pid) const -> bool;
  [[nodiscard]] auto IsReadable(PageId pid) const -> bool;
  [[nodiscard]] auto Capacity() const -> size_t { return capacity_; }
  [[nodiscard]] auto LiveCount() const -> size_t { return live_.load(std::memory_order_relaxed); }
  [[nodiscard]] auto FreeListSize() const -> size_t;

  /// Visits every live slot (not safe against concurrent frees).
  void ForEachLive(const std::function<void(PageId, const Element *)> &fn) const;

 private:
  enum SlotState : uint8_t { kFree, kLive, kRetired };

  struct Slot {
    std::atomic<const Element *> head{nullptr};
    std::atomic<uint8_t> state{kFree};
    std::atomic<uint32_t> next_free{0};
  };

  class PidRelease final : public Retirable
  {
   public:
    PidRelease(MappingTable *table, PageId pid) : table_{table}, pid_{pid} {}
    void OnReclaim() override { table_->PushFree(pid_); }

   private:
    MappingTable *table_;
    PageId pid_;
  };

  void PushFree(PageId pid);
  auto PopFree() -> PageId;

  EpochManager &epochs_;
  size_t capacity_;
  std::unique_ptr<Slot[]> slots_;
  std::atomic<size_t> bump_{0};
  std::atomic<size_t> live_{0};
  /// (ABA tag << 32) | (index + 1); 0 in the low half means empty.
  std::atomic<uint64_t> free_head_{0};
};

}  // namespace nkv

#endif  // NKV_MAPPING_TABLE_HPP
