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

#ifndef NKV_TREE_INTERNAL_HPP
#define NKV_TREE_INTERNAL_HPP

#include <optional>

#include "nkv/tree.hpp"

namespace nkv
{
/// What one chain says about a probe.
struct Tree::Step {
  enum class Act : uint8_t { kHere, kSide, kRedirect, kRestart };

  Act act{Act::kRestart};
  PageId next{};  // side / redirect target, or the routed child at an index node
  const BaseNode *base{nullptr};
  const Notice *notice{nullptr};
  size_t data_deltas{0};
  std::optional<std::optional<Value>> match{};
  bool dead_via_side{false};
  Bound eff_low{};
  Bound eff_high{};
  PageId eff_side{};
  bool keep_overflow{true};
};

/// The node a descent stopped at, with the head it loaded there.
struct Tree::Position {
  struct LazyTerm {
    uint32_t level;
    Key sep;
    PageId child;
  };

  PageId pid{};
  const Element *head{nullptr};
  Step step{};
  PageId parent{};  // index node that routed straight to pid, if any
  PageId dead{};    // dying right neighbor whose range pid currently answers for
  const Element *dead_head{nullptr};
  std::optional<LazyTerm> lazy{};
  PageId stale_pid{};
  const Notice *stale{nullptr};
};

}  // namespace nkv

#endif  // NKV_TREE_INTERNAL_HPP
