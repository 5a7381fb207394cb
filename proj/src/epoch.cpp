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

#include "nkv/epoch.hpp"

#include <functional>
#include <stdexcept>
#include <thread>

#include "nkv/contract.hpp"

namespace nkv
{
namespace
{
std::atomic<uint64_t> g_sentinel_touches{0};

auto
SlotHint() -> size_t
{
  thread_local const size_t hint = std::hash<std::thread::id>{}(std::this_thread::get_id());
  return hint;
}
}  // namespace

auto
SentinelTouches() -> uint64_t
{
  return g_sentinel_touches.load(std::memory_order_relaxed);
}

void
RecordSentinelTouch()
{
  g_sentinel_touches.fetch_add(1, std::memory_order_relaxed);
}

/*##############################################################################
 * Guard
 *############################################################################*/

EpochManager::Guard::Guard(Guard &&other) noexcept
    : mgr_{other.mgr_}, slot_{other.slot_}, epoch_{other.epoch_}, active_{other.active_}
{
  other.active_ = false;
  other.mgr_ = nullptr;
}

auto
EpochManager::Guard::operator=(Guard &&other) noexcept -> Guard &
{
  if (this != &other) {
    if (active_) mgr_->Exit(*this);
    mgr_ = other.mgr_;
    slot_ = other.slot_;
    epoch_ = other.epoch_;
    active_ = other.active_;
    other.active_ = false;
    other.mgr_ = nullptr;
  }
  return *this;
}

EpochManager::Guard::~Guard()
{
  if (active_) mgr_->Exit(*this);
}

/*##############################################################################
 * EpochManager
 *############################################################################*/

EpochManager::EpochManager(Options options) : options_{options}, current_{options.initial}
{
  for (auto &slot : slots_) slot.store(kFree, std::memory_order_relaxed);
}

EpochManager::~EpochManager()
{
  DrainAll();
  std::lock_guard lock{quarantine_mutex_};
  for (auto *obj : quarantine_) delete obj;
  quarantine_.clear();
}

auto
EpochManager::Enter() -> Guard
{
  const auto start = SlotHint();
  size_t idx = kMaxGuards;
  for (size_t i = 0; i < kMaxGuards; ++i) {
    const auto candidate = (start + i) % kMaxGuards;
    auto expected = kFree;
    if (slots_[candidate].compare_exchange_strong(expected, kClaimed, std::memory_order_acq_rel)) {
      idx = candidate;
      break;
    }
  }
  if (idx == kMaxGuards) throw std::runtime_error{"epoch guard slots exhausted"};

  auto hw = slot_high_water_.load(std::memory_order_relaxed);
  while (hw < idx + 1 && !slot_high_water_.compare_exchange_weak(hw, idx + 1)) {
  }

  // publish the observed epoch and confirm it is still current
  auto e = current_.load(std::memory_order_seq_cst);
  for (;;) {
    slots_[idx].store(e, std::memory_order_seq_cst);
    const auto again = current_.load(std::memory_order_seq_cst);
    if (again == e) break;
    e = again;
  }
  return Guard{this, idx, e};
}

void
EpochManager::Exit(Guard &guard)
{
  NKV_CONTRACT(guard.active_, "double exit of an epoch guard");
  NKV_CONTRACT(guard.mgr_ == this, "guard exited on a foreign epoch manager");
  slots_[guard.slot_].store(kFree, std::memory_order_seq_cst);
  guard.active_ = false;
}

void
EpochManager::Retire(Retirable *obj)
{
  const bool first = !obj->retired_.exchange(true, std::memory_order_acq_rel);
  NKV_CONTRACT(first, "object retired twice");
  if (!first) return;

  auto *node = new RetireNode{obj, current_.load(std::memory_order_seq_cst), nullptr};
  pending_.fetch_add(1, std::memory_order_relaxed);
  PushList(node, node);
}

void
EpochManager::PushList(RetireNode *first, RetireNode *last)
{
  auto *head = retired_.load(std::memory_order_relaxed);
  do {
    last->next = head;
  } while (!retired_.compare_exchange_weak(head, first, std::memory_order_release, std::memory_order_relaxed));
}

auto
EpochManager::TryAdvance() -> Epoch
{
  auto e = current_.load(std::memory_order_seq_cst);
  const auto hw = slot_high_water_.load(std::memory_order_acquire);
  for (size_t i = 0; i < hw; ++i) {
    const auto v = slots_[i].load(std::memory_order_seq_cst);
    if (v < kClaimed && v <= e) return e;
  }
  if (current_.compare_exchange_strong(e, e + 1, std::memory_order_seq_cst)) return e + 1;
  return e;
}

auto
EpochManager::Collect() -> size_t
{
  auto *list = retired_.exchange(nullptr, std::memory_order_acquire);
  if (list == nullptr) return 0;

  const auto cur = current_.load(std::memory_order_seq_cst);
  RetireNode *keep_first = nullptr;
  RetireNode *keep_last = nullptr;
  size_t reclaimed = 0;
  while (list != nullptr) {
    auto *node = list;
    list = list->next;
    if (node->epoch + kReclaimLag <= cur) {
      Reclaim(node->obj);
      delete node;
      ++reclaimed;
    } else {
      node->next = keep_first;
      keep_first = node;
      if (keep_last == nullptr) keep_last = node;
    }
  }
  if (keep_first != nullptr) PushList(keep_first, keep_last);
  pending_.fetch_sub(reclaimed, std::memory_order_relaxed);
  return reclaimed;
}

auto
EpochManager::DrainAll() -> size_t
{
  NKV_CONTRACT(ActiveGuards() == 0, "DrainAll with active guards");
  size_t reclaimed = 0;
  for (;;) {
    auto *list = retired_.exchange(nullptr, std::memory_order_acquire);
    if (list == nullptr) break;
    while (list != nullptr) {
      auto *node = list;
      list = list->next;
      Reclaim(node->obj);
      delete node;
      ++reclaimed;
    }
  }
  pending_.fetch_sub(reclaimed, std::memory_order_relaxed);
  return reclaimed;
}

auto
EpochManager::ActiveGuards() const -> size_t
{
  size_t n = 0;
  for (const auto &slot : slots_) {
    if (slot.load(std::memory_order_acquire) < kClaimed) ++n;
  }
  return n;
}

void
EpochManager::Reclaim(Retirable *obj)
{
  obj->OnReclaim();
  reclaimed_.fetch_add(1, std::memory_order_relaxed);
  if (!options_.poisoning) {
    delete obj;
    return;
  }
  obj->Poison();
  std::lock_guard lock{quarantine_mutex_};
  quarantine_.push_back(obj);
  while (quarantine_.size() > options_.quarantine_limit) {
    delete quarantine_.front();
    quarantine_.pop_front();
  }
}

}  // namespace nkv
