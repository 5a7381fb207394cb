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

#ifndef NKV_SCENARIOS_HPP
#define NKV_SCENARIOS_HPP

// C++ standard libraries
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

// local sources
#include "nkv/harness.hpp"

namespace nkv::harness
{
/// Tree settings shared by the shipped scenarios: tiny thresholds, no automatic SMOs.
auto ScenarioConfig() -> TreeConfig;

/// The shipped scenario library.
auto ScenarioLibrary() -> std::vector<ScenarioDef>;

auto FindScenario(std::string_view name) -> std::optional<ScenarioDef>;

/// Explores each scenario exhaustively and prints its report.
/// Returns the number of scenarios with violations or explosion errors.
auto RunLibrary(const std::vector<ScenarioDef> &scenarios, const Options &options, std::ostream &out) -> int;

}  // namespace nkv::harness

#endif  // NKV_SCENARIOS_HPP
