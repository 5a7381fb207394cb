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

#ifndef NKV_LINEARIZABILITY_HPP
#define NKV_LINEARIZABILITY_HPP

// C++ standard libraries
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

// local sources
#include "nkv/node_chain.hpp"

/// Wing-Gong style search for a sequential witness of a small key-value history.
namespace nkv::lin
{
enum class OpKind : uint8_t { kGet, kUpsert, kDelete, kScan };

struct HistoryOp {
  int thread{0};
  OpKind kind{OpKind::kGet};
  Key key{};
  Key high{};    // scans: exclusive upper bound
  Value value{};  // upserts
  uint64_t invoke{0};
  std::optional<uint64_t> response{};  // nullopt: never returned
  std::optional<Value> got{};
  std::vector<Record> scanned{};
};

using Model = std::map<Key, Value>;

struct CheckResult {
  bool ok{false};
  std::vector<size_t> order{};  // indices of the witness, when ok
  std::string message{};
};

/**
 * @brief Searches for a linearization of @p history.
 *
 * Op a must precede op b when a.response < b.invoke. Ops without a response
 * may take effect at any point after their invocation or not at all. When
 * @p final_state is given, the witness must end in exactly that state.
 * Histories are limited to 64 ops.
 */
auto Check(const std::vector<HistoryOp> &history, const Model &initial, const std::optional<Model> &final_state = {})
    -> CheckResult;

auto Describe(const HistoryOp &op) -> std::string;

}  // namespace nkv::lin

#endif  // NKV_LINEARIZABILITY_HPP
