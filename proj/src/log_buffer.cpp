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

#include "nkv/log_buffer.hpp"

#include <cstring>
#include <sstream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nkv/contract.hpp"

namespace nkv
{
auto
EntryKindName(EntryKind kind) -> const char *
{
  switch (kind) {
    case EntryKind::kRecord:
      return "record";
    case EntryKind::kNodeImage:
      return "node";
    case EntryKind::kRaw:
      return "raw";
  }
  return "?";
}

LogBuffer::LogBuffer(size_t capacity_bytes)
    : capacity_{capacity_bytes / 8 * 8}, arena_{new uint64_t[capacity_bytes / 8]}
{
  if (capacity_ == 0) throw std::invalid_argument{"log buffer capacity must be positive"};
}

auto
LogBuffer::Footprint(size_t length, uint32_t link_count) -> size_t
{
  return (kHeaderWords + link_count) * 8 + (length + 7) / 8 * 8;
}

auto
LogBuffer::Word(uint64_t offset, size_t idx) const -> std::atomic_ref<uint64_t>
{
  return std::atomic_ref<uint64_t>{arena_[offset / 8 + idx]};
}

auto
LogBuffer::Reserve(size_t length, EntryKind kind, uint64_t id, uint32_t link_count) -> BufferTicket
{
  if (Footprint(length, link_count) > capacity_) throw CapacityError{"entry larger than the log buffer"};
  auto ticket = TryReserve(length, kind, id, link_count);
  if (!ticket) throw CapacityError{"log buffer full"};
  return *ticket;
}

auto
LogBuffer::TryReserve(size_t length, EntryKind kind, uint64_t id, uint32_t link_count) -> std::optional<BufferTicket>
{
  const auto need = Footprint(length, link_count);
  if (length > UINT32_MAX || need > capacity_) return std::nullopt;
  auto head = head_.load(std::memory_order_acquire);
  do {
    if (head + need > capacity_) return std::nullopt;
  } while (!head_.compare_exchange_weak(head, head + need, std::memory_order_acq_rel));

  Word(head, kSizeWord).store((static_cast<uint64_t>(need) << 32U) | length, std::memory_order_relaxed);
  Word(head, kMetaWord).store((static_cast<uint64_t>(kind) << 32U) | link_count, std::memory_order_relaxed);
  Word(head, kIdWord).store(id, std::memory_order_relaxed);
  Word(head, kTouchWord).store(0, std::memory_order_relaxed);
  for (uint32_t i = 0; i < link_count; ++i) Word(head, kHeaderWords + i).store(0, std::memory_order_relaxed);
  Word(head, kStateWord).store(kReserved, std::memory_order_release);
  return BufferTicket{head, static_cast<uint32_t>(length), false};
}

auto
LogBuffer::WriteAndRelease(BufferTicket &ticket, std::string_view bytes) -> uint64_t
{
  NKV_CONTRACT(ticket.Valid(), "release of an invalid ticket");
  const bool first = !ticket.released && Word(ticket.offset, kStateWord).load(std::memory_order_acquire) == kReserved;
  NKV_CONTRACT(first, "ticket released twice");
  if (!first) throw std::logic_error{"ticket released twice"};
  if (bytes.size() > ticket.length) throw std::length_error{"write exceeds reservation"};

  const auto link_count = static_cast<uint32_t>(Word(ticket.offset, kMetaWord).load(std::memory_order_relaxed));
  auto *dst = reinterpret_cast<char *>(&arena_[ticket.offset / 8 + kHeaderWords + link_count]);
  std::memcpy(dst, bytes.data(), bytes.size());
  const auto need = FootprintAt(ticket.offset);
  Word(ticket.offset, kSizeWord).store((static_cast<uint64_t>(need) << 32U) | bytes.size(), std::memory_order_relaxed);
  Word(ticket.offset, kStateWord).store(kReleased, std::memory_order_release);
  ticket.released = true;
  return ticket.offset;
}

auto
LogBuffer::FootprintAt(uint64_t offset) const -> size_t
{
  return Word(offset, kSizeWord).load(std::memory_order_relaxed) >> 32U;
}

auto
LogBuffer::InfoAt(uint64_t offset) const -> EntryInfo
{
  const auto size = Word(offset, kSizeWord).load(std::memory_order_relaxed);
  const auto meta = Word(offset, kMetaWord).load(std::memory_order_relaxed);
  return EntryInfo{offset,
                   static_cast<uint32_t>(size & 0xffffffffU),
                   static_cast<EntryKind>(meta >> 32U),
                   Word(offset, kIdWord).load(std::memory_order_relaxed),
                   static_cast<uint32_t>(meta & 0xffffffffU),
                   Word(offset, kStateWord).load(std::memory_order_acquire) == kReleased};
}

auto
LogBuffer::Info(uint64_t offset) const -> EntryInfo
{
  NKV_CONTRACT(offset % 8 == 0 && offset < Used(), "offset outside the buffer");
  return InfoAt(offset);
}

auto
LogBuffer::IsReleased(uint64_t offset) const -> bool
{
  return offset % 8 == 0 && offset < Used() && Word(offset, kStateWord).load(std::memory_order_acquire) == kReleased;
}

auto
LogBuffer::Payload(uint64_t offset) const -> std::string_view
{
  const auto info = Info(offset);
  if (!info.released) throw std::logic_error{"entry not released"};
  const auto *src = reinterpret_cast<const char *>(&arena_[offset / 8 + kHeaderWords + info.link_count]);
  return {src, info.length};
}

auto
LogBuffer::LinkWord(uint64_t offset, uint32_t slot) const -> uint64_t
{
  return Word(offset, kHeaderWords + slot).load(std::memory_order_acquire);
}

void
LogBuffer::SetLinkWord(uint64_t offset, uint32_t slot, uint64_t value)
{
  Word(offset, kHeaderWords + slot).store(value, std::memory_order_release);
}

auto
LogBuffer::Touch(uint64_t offset) const -> uint64_t
{
  return Word(offset, kTouchWord).load(std::memory_order_relaxed);
}

void
LogBuffer::SetTouch(uint64_t offset, uint64_t stamp) const
{
  Word(offset, kTouchWord).store(stamp, std::memory_order_relaxed);
}

auto
LogBuffer::Compact(const std::function<bool(const EntryInfo &)> &keep,
                   const std::function<void(uint64_t, uint64_t)> &relocate) -> size_t
{
  const auto end = head_.load(std::memory_order_acquire);
  std::unordered_map<uint64_t, uint64_t> moved;  // old offset + 1 -> new offset + 1 (0 = dropped)
  std::vector<std::pair<uint64_t, uint64_t>> order;
  uint64_t write = 0;
  for (uint64_t read = 0; read < end;) {
    const auto info = InfoAt(read);
    const auto size = FootprintAt(read);
    if (info.released && keep(info)) {
      if (read != write) std::memmove(&arena_[write / 8], &arena_[read / 8], size);
      moved.emplace(read + 1, write + 1);
      if (read != write) order.emplace_back(read, write);
      write += size;
    } else {
      moved.emplace(read + 1, 0);
    }
    read += size;
  }

  // fix embedded links, then report moves
  for (uint64_t pos = 0; pos < write; pos += FootprintAt(pos)) {
    const auto links = static_cast<uint32_t>(Word(pos, kMetaWord).load(std::memory_order_relaxed) & 0xffffffffU);
    for (uint32_t i = 0; i < links; ++i) {
      const auto target = LinkWord(pos, i);
      if (target == 0) continue;
      const auto it = moved.find(target);
      SetLinkWord(pos, i, it == moved.end() ? 0 : it->second);
    }
  }
  for (const auto &[from, to] : order) relocate(from, to);

  head_.store(write, std::memory_order_release);
  return end - write;
}

void
LogBuffer::ForEachReleased(const std::function<void(const EntryInfo &)> &fn) const
{
  const auto end = head_.load(std::memory_order_acquire);
  for (uint64_t pos = 0; pos < end; pos += FootprintAt(pos)) {
    const auto info = InfoAt(pos);
    if (info.released) fn(info);
  }
}

auto
LogBuffer::Dump() const -> std::string
{
  std::ostringstream out;
  ForEachReleased([&](const EntryInfo &e) {
    out << "offset=" << e.offset << " length=" << e.length << " kind=" << EntryKindName(e.kind) << " id=" << e.id
        << '\n';
  });
  return out.str();
}

}  // namespace nkv
