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

#include "nkv/linearizability.hpp"

// C++ standard libraries
#include <sstream>
#include <stdexcept>
#include <set>
#include <utility>

namespace nkv::lin
{
namespace
{
constexpr size_t kMaxOps = 64;

auto
ModelHash(const Model &model) -> uint64_t
{
  uint64_t h = 1469598103934665603ULL;
  const auto mix = [&](const std::string &s) {
    for (const auto c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (const auto &[k, v] : model) {
    mix(k);
    mix(v);
  }
  return h;
}

/// Applies @p op to @p model; false when a completed op's result disagrees.
auto
Apply(const HistoryOp &op, Model &model) -> bool
{
  const bool check = op.response.has_value();
  switch (op.kind) {
    case OpKind::kGet: {
      if (!check) return true;
      const auto it = model.find(op.key);
      const std::optional<Value> want = it == model.end() ? std::nullopt : std::optional<Value>{it->second};
      return want == op.got;
    }
    case OpKind::kUpsert:
      model[op.key] = op.value;
      return true;
    case OpKind::kDelete:
      model.erase(op.key);
      return true;
    case OpKind::kScan: {
      if (!check) return true;
      std::vector<Record> want;
      for (auto it = model.lower_bound(op.key); it != model.end() && it->first < op.high; ++it) {
        want.push_back(Record{it->first, it->second});
      }
      return want == op.scanned;
    }
  }
  return false;
}

class Search
{
 public:
  Search(const std::vector<HistoryOp> &history, const std::optional<Model> &final_state)
      : history_{history}, final_{final_state}
  {
    for (size_t i = 0; i < history_.size(); ++i) {
      if (history_[i].response) required_ |= uint64_t{1} << i;
    }
  }

  auto
  Run(Model model) -> bool
  {
    return Step(0, model);
  }

  [[nodiscard]] auto Order() const -> const std::vector<size_t> & { return order_; }

 private:
  auto
  Step(uint64_t done, Model &model) -> bool
  {
    if ((done & required_) == required_ && (!final_ || *final_ == model)) return true;
    if (!seen_.emplace(done, ModelHash(model)).second) return false;
    for (size_t i = 0; i < history_.size(); ++i) {
      if ((done >> i & 1U) != 0 || !Minimal(done, i)) continue;
      auto next = model;
      if (!Apply(history_[i], next)) continue;
      order_.push_back(i);
      if (Step(done | uint64_t{1} << i, next)) {
        model = std::move(next);
        return true;
      }
      order_.pop_back();
    }
    return false;
  }

  /// No unlinearized op returned before op @p i was invoked.
  [[nodiscard]] auto
  Minimal(uint64_t done, size_t i) const -> bool
  {
    for (size_t j = 0; j < history_.size(); ++j) {
      if (j == i || (done >> j & 1U) != 0 || !history_[j].response) continue;
      if (*history_[j].response < history_[i].invoke) return false;
    }
    return true;
  }

  const std::vector<HistoryOp> &history_;
  const std::optional<Model> &final_;
  uint64_t required_{0};
  std::set<std::pair<uint64_t, uint64_t>> seen_{};
  std::vector<size_t> order_{};
};
}  // namespace

auto
Describe(const HistoryOp &op) -> std::string
{
  std::ostringstream os;
  os << "t" << op.thread << " ";
  switch (op.kind) {
    case OpKind::kGet:
      os << "get(" << op.key << ")";
      if (op.response) os << " -> " << (op.got ? *op.got : std::string{"<absent>"});
      break;
    case OpKind::kUpsert:
      os << "upsert(" << op.key << ", " << op.value << ")";
      break;
    case OpKind::kDelete:
      os << "delete(" << op.key << ")";
      break;
    case OpKind::kScan:
      os << "scan(" << op.key << ", " << op.high << ")";
      if (op.response) os << " -> " << op.scanned.size() << " records";
      break;
  }
  os << " [" << op.invoke << ", ";
  if (op.response) {
    os << *op.response << "]";
  } else {
    os << "pending]";
  }
  return os.str();
}

auto
Check(const std::vector<HistoryOp> &history, const Model &initial, const std::optional<Model> &final_state)
    -> CheckResult
{
  if (history.size() > kMaxOps) throw std::invalid_argument{"history longer than 64 ops"};
  Search search{history, final_state};
  CheckResult result;
  if (search.Run(initial)) {
    result.ok = true;
    result.order = search.Order();
    return result;
  }
  std::ostringstream os;
  os << "no linearization of:";
  for (const auto &op : history) os << "\n  " << Describe(op);
  if (final_state) os << "\n  final state: " << final_state->size() << " keys";
  result.message = os.str();
  return result;
}

}  // namespace nkv::lin
