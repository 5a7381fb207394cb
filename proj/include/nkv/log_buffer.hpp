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

#ifndef NKV_LOG_BUFFER_HPP
#define NKV_LOG_BUFFER_HPP

// C++ standard libraries
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nkv
{
class CapacityError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

enum class EntryKind : uint8_t {
  kRecord = 1,
  kNodeImage = 2,
  kRaw = 3,
};

auto EntryKindName(EntryKind kind) -> const char *;

struct BufferTicket {
  uint64_t offset{~uint64_t{0}};
  uint32_t length{0};
  bool released{false};

  [[nodiscard]] auto Valid() const -> bool { return offset != ~uint64_t{0}; }
};

/// Read-only description of one entry.
struct EntryInfo {
  uint64_t offset;
  uint32_t length;  // payload bytes
  EntryKind kind;
  uint64_t id;
  uint32_t link_count;
  bool released;
};

/**
 * @brief A single append-only segment with reservation and deferred release.
 *
 * Each entry is laid out as a header, `link_count` embedded link words, and
 * the payload. Link words hold (offset + 1) of another entry, or 0. Reserve()
 * bumps the head with a CAS loop; the owner fills the region privately and
 * publishes it with WriteAndRelease(). Entries never released stay invisible
 * and are discarded by the next compaction.
 *
 * Compact() and the iteration helpers require that no reserve or release runs
 * concurrently.
 */
class LogBuffer
{
 public:
  explicit LogBuffer(size_t capacity_bytes);
  LogBuffer(const LogBuffer &) = delete;
  auto operator=(const LogBuffer &) -> LogBuffer & = delete;

  /// Entry footprint in the arena for a payload of @p length bytes.
  [[nodiscard]] static auto Footprint(size_t length, uint32_t link_count) -> size_t;

  /// Throws CapacityError when the request can never fit or the buffer is full.
  auto Reserve(size_t length, EntryKind kind = EntryKind::kRaw, uint64_t id = 0, uint32_t link_count = 0)
      -> BufferTicket;

  /// Like Reserve() but reports a full buffer with nullopt.
  auto TryReserve(size_t length, EntryKind kind = EntryKind::kRaw, uint64_t id = 0, uint32_t link_count = 0)
      -> std::optional<BufferTicket>;

  /// Copies @p bytes into the region and makes the entry visible.
  auto WriteAndRelease(BufferTicket &ticket, std::string_view bytes) -> uint64_t;

  [[nodiscard]] auto Info(uint64_t offset) const -> EntryInfo;
  [[nodiscard]] auto Payload(uint64_t offset) const -> std::string_view;
  [[nodiscard]] auto IsReleased(uint64_t offset) const -> bool;

  [[nodiscard]] auto LinkWord(uint64_t offset, uint32_t slot) const -> uint64_t;
  void SetLinkWord(uint64_t offset, uint32_t slot, uint64_t value);

  [[nodiscard]] auto Touch(uint64_t offset) const -> uint64_t;
  void SetTouch(uint64_t offset, uint64_t stamp) const;

  /**
   * @brief Slides kept entries toward the start of the segment.
   *
   * @param keep decides, for each released entry, whether it survives.
   * @param relocate is called once per entry whose offset changes.
   * @return the number of bytes reclaimed.
   */
  auto Compact(const std::function<bool(const EntryInfo &)> &keep,
               const std::function<void(uint64_t, uint64_t)> &relocate) -> size_t;

  void ForEachReleased(const std::function<void(const EntryInfo &)> &fn) const;

  /// Text listing of released entries: offset, length, kind, id.
  [[nodiscard]] auto Dump() const -> std::string;

  [[nodiscard]] auto Capacity() const -> size_t { return capacity_; }
  [[nodiscard]] auto Used() const -> size_t { return head_.load(std::memory_order_acquire); }

 private:
  static constexpr uint64_t kReserved = 1;
  static constexpr uint64_t kReleased = 2;

  // header words
  static constexpr size_t kSizeWord = 0;   // footprint << 32 | payload length
  static constexpr size_t kMetaWord = 1;   // kind << 32 | link count
  static constexpr size_t kStateWord = 2;  // kReserved / kReleased
  static constexpr size_t kIdWord = 3;
  static constexpr size_t kTouchWord = 4;
  static constexpr size_t kHeaderWords = 5;

  [[nodiscard]] auto Word(uint64_t offset, size_t idx) const -> std::atomic_ref<uint64_t>;
  [[nodiscard]] auto InfoAt(uint64_t offset) const -> EntryInfo;
  [[nodiscard]] auto FootprintAt(uint64_t offset) const -> size_t;

  size_t capacity_;
  std::unique_ptr<uint64_t[]> arena_;
  std::atomic<uint64_t> head_{0};
};

}  // namespace nkv

#endif  // NKV_LOG_BUFFER_HPP
