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

#ifndef NKV_EPOCH_HPP
#define NKV_EPOCH_HPP

// C++ standard libraries
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>

namespace nkv
{
using Epoch = uint64_t;

/**
 * @brief Base of every object whose lifetime is managed by the epoch facility.
 *
 * Reclaimed objects are either deleted or, with poisoning enabled, stamped
 * with a sentinel and parked in a quarantine so that any late access can be
 * detected instead of reading freed memory.
 */
class Retirable
{
 public:
  static constexpr uint32_t kLiveMagic = 0x4e4b5631;
  static constexpr uint32_t kPoisonMagic = 0xdeadbeef;

  Retirable() = default;
  Retirable(const Retirable &) = delete;
  auto operator=(const Retirable &) -> Retirable & = delete;
  virtual ~Retirable() = default;

  [[nodiscard]] auto
  Poisoned() const -> bool
  {
    return magic_.load(std::memory_order_relaxed) != kLiveMagic;
  }

  void Poison() { magic_.store(kPoisonMagic, std::memory_order_relaxed); }

  /// Hook run exactly once when the object's retirement becomes safe.
  virtual void OnReclaim() {}

 private:
  friend class EpochManager;

  std::atomic<uint32_t> magic_{kLiveMagic};
  std::atomic<bool> retired_{false};
};

/// Number of accesses to poisoned objects observed process-wide.
auto SentinelTouches() -> uint64_t;
void RecordSentinelTouch();

/// Counts a touch if @p obj has been reclaimed; returns true when it was.
inline auto
CheckLive(const Retirable *obj) -> bool
{
  if (obj->Poisoned()) {
    RecordSentinelTouch();
    return false;
  }
  return true;
}

/**
 * @brief Epoch-based deferred reclamation.
 *
 * A guard records the global epoch at entry and pins it: the epoch moves from
 * E to E+1 only when no active guard entered at E, so while a guard entered at
 * g is active the epoch stays at g. Objects retired in epoch r are reclaimed
 * once the epoch reaches r+2, by which point every active guard entered after
 * the retirement.
 *
 * Advancement is cooperative: callers invoke TryAdvance() and Collect().
 */
class EpochManager
{
 public:
  static constexpr size_t kMaxGuards = 256;
  static constexpr Epoch kReclaimLag = 2;

  struct Options {
    Epoch initial = 1;
    bool poisoning = false;
    size_t quarantine_limit = size_t{1} << 20;
  };

  class Guard
  {
   public:
    Guard() = default;
    Guard(Guard &&other) noexcept;
    auto operator=(Guard &&other) noexcept -> Guard &;
    Guard(const Guard &) = delete;
    auto operator=(const Guard &) -> Guard & = delete;
    ~Guard();

    [[nodiscard]] auto EpochAtEntry() const -> Epoch { return epoch_; }
    [[nodiscard]] auto Active() const -> bool { return active_; }

   private:
    friend class EpochManager;
    Guard(EpochManager *mgr, size_t slot, Epoch epoch) : mgr_{mgr}, slot_{slot}, epoch_{epoch}, active_{true} {}

    EpochManager *mgr_{nullptr};
    size_t slot_{0};
    Epoch epoch_{0};
    bool active_{false};
  };

  EpochManager() : EpochManager(Options{}) {}
  explicit EpochManager(Options options);
  EpochManager(const EpochManager &) = delete;
  auto operator=(const EpochManager &) -> EpochManager & = delete;
  ~EpochManager();

  auto Enter() -> Guard;
  void Exit(Guard &guard);

  /// Queues @p obj for reclamation; it must already be unreachable.
  void Retire(Retirable *obj);

  /// Returns the current epoch, after advancing it if no guard lags behind.
  auto TryAdvance() -> Epoch;

  /// Reclaims retired objects whose epoch is at least kReclaimLag behind.
  auto Collect() -> size_t;

  /// Reclaims everything regardless of epochs. Requires no active guards.
  auto DrainAll() -> size_t;

  [[nodiscard]] auto Current() const -> Epoch { return current_.load(std::memory_order_seq_cst); }
  [[nodiscard]] auto ActiveGuards() const -> size_t;
  [[nodiscard]] auto PendingRetired() const -> size_t { return pending_.load(std::memory_order_relaxed); }
  [[nodiscard]] auto ReclaimedCount() const -> uint64_t { return reclaimed_.load(std::memory_order_relaxed); }
  [[nodiscard]] auto Poisoning() const -> bool { return options_.poisoning; }

 private:
  static constexpr uint64_t kFree = ~uint64_t{0};
  static constexpr uint64_t kClaimed = kFree - 1;

  struct RetireNode {
    Retirable *obj;
    Epoch epoch;
    RetireNode *next;
  };

  void Reclaim(Retirable *obj);
  void PushList(RetireNode *first, RetireNode *last);

  Options options_;
  std::atomic<Epoch> current_;
  std::array<std::atomic<uint64_t>, kMaxGuards> slots_{};
  std::atomic<size_t> slot_high_water_{0};
  std::atomic<RetireNode *> retired_{nullptr};
  std::atomic<size_t> pending_{0};
  std::atomic<uint64_t> reclaimed_{0};

  std::mutex quarantine_mutex_;
  std::deque<Retirable *> quarantine_;
};

using Guard = EpochManager::Guard;

}  // namespace nkv

#endif  // NKV_EPOCH_HPP
