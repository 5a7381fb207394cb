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

#ifndef NKV_CONTRACT_HPP
#define NKV_CONTRACT_HPP

#include <cstdio>
#include <cstdlib>

namespace nkv::detail
{
[[noreturn]] inline void
ContractViolation(const char *cond, const char *msg, const char *file, int line)
{
  std::fprintf(stderr, "contract violation: %s (%s) at %s:%d\n", msg, cond, file, line);
  std::fflush(stderr);
  std::abort();
}
}  // namespace nkv::detail

#if defined(NKV_CONTRACTS) && NKV_CONTRACTS
#define NKV_CONTRACT(cond, msg)                                                   \
  do {                                                                            \
    if (!(cond)) ::nkv::detail::ContractViolation(#cond, msg, __FILE__, __LINE__); \
  } while (0)
#else
#define NKV_CONTRACT(cond, msg) \
  do {                          \
  } while (0)
#endif

#endif  // NKV_CONTRACT_HPP
