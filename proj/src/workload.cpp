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

#include "nkv/workload.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "nkv/record_cache.hpp"

namespace nkv
{
namespace
{
constexpr uint64_t kAdvanceEvery = 64;
// populations up to this size sample from an exact cumulative table
constexpr uint64_t kExactZipfLimit = uint64_t{1} << 22;

auto
Scramble(uint64_t x) -> uint64_t
{
  x ^= x >> 33U;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33U;
  x *= 0xc4ceb9fe1a85ec53ULL;
  return x ^ (x >> 33U);
}

auto
SplitColon(const std::string &text) -> std::vector<std::string>
{
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in{text};
  while (std::getline(in, part, ':')) parts.push_back(part);
  if (!text.empty() && text.back() == ':') parts.emplace_back();
  return parts;
}

auto
ToDouble(const std::string &text, const std::string &what) -> double
{
  try {
    size_t used = 0;
    const auto v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception &) {
  }
  throw SpecError{"bad " + what + ": '" + text + "'"};
}

struct Ack {
  uint32_t key;
  uint32_t seq;
  uint64_t start;
  uint64_t end;
  uint16_t thread;
  bool del;
};

auto
ValueName(unsigned thread, uint32_t seq) -> Value
{
  return "t" + std::to_string(thread) + "-" + std::to_string(seq);
}
}  // namespace

/*##############################################################################
 * Key generation
 *############################################################################*/

ZipfGenerator::ZipfGenerator(uint64_t n, double theta, uint64_t seed) : n_{n}, theta_{theta}, rng_{seed}
{
  if (n == 0) throw SpecError{"zipf needs at least one item"};
  if (theta < 0 || theta >= 1) throw SpecError{"zipf theta must lie in [0, 1)"};
  if (theta == 0) return;
  if (n <= kExactZipfLimit) cdf_.reserve(n);
  for (uint64_t i = 1; i <= n; ++i) {
    zetan_ += 1.0 / std::pow(static_cast<double>(i), theta);
    if (n <= kExactZipfLimit) cdf_.push_back(zetan_);
  }
  const double zeta2 = 1.0 + 1.0 / std::pow(2.0, theta);
  alpha_ = 1.0 / (1.0 - theta);
  eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
  half_pow_theta_ = 1.0 + std::pow(0.5, theta);
}

auto
ZipfGenerator::Uniform() -> double
{
  return static_cast<double>(rng_() >> 11U) * 0x1.0p-53;
}

auto
ZipfGenerator::Next() -> uint64_t
{
  const auto u = Uniform();
  if (theta_ == 0) return std::min(static_cast<uint64_t>(u * static_cast<double>(n_)), n_ - 1);
  const auto uz = u * zetan_;
  if (!cdf_.empty()) {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), uz);
    return std::min(static_cast<uint64_t>(it - cdf_.begin()), n_ - 1);
  }
  // approximate inversion for very large populations
  if (uz < 1.0) return 0;
  if (uz < half_pow_theta_ && n_ > 1) return 1;
  const auto r = static_cast<uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(r, n_ - 1);
}

auto
ZipfTrace(uint64_t ids, uint64_t accesses, double theta, uint64_t seed) -> std::vector<uint64_t>
{
  ZipfGenerator zipf{ids, theta, seed};
  std::vector<uint64_t> trace;
  trace.reserve(accesses);
  for (uint64_t i = 0; i < accesses; ++i) trace.push_back(zipf.Next());
  return trace;
}

auto
KeyName(uint64_t index) -> Key
{
  char buf[24];
  std::snprintf(buf, sizeof(buf), "k%010llu", static_cast<unsigned long long>(index));
  return buf;
}

/*##############################################################################
 * Spec parsing
 *############################################################################*/

auto
OpMix::Parse(const std::string &text) -> OpMix
{
  const auto parts = SplitColon(text);
  if (parts.size() != 4) throw SpecError{"mix must be r:u:d:s, got '" + text + "'"};
  OpMix mix{ToDouble(parts[0], "read fraction"), ToDouble(parts[1], "upsert fraction"),
            ToDouble(parts[2], "delete fraction"), ToDouble(parts[3], "scan fraction")};
  if (mix.read < 0 || mix.upsert < 0 || mix.del < 0 || mix.scan < 0) {
    throw SpecError{"mix fractions must be non-negative"};
  }
  const auto sum = mix.read + mix.upsert + mix.del + mix.scan;
  if (std::abs(sum - 1.0) > 1e-9) throw SpecError{"mix fractions sum to " + std::to_string(sum) + ", not 1"};
  return mix;
}

auto
KeyDist::Parse(const std::string &text) -> KeyDist
{
  if (text == "uniform") return KeyDist{0};
  const auto parts = SplitColon(text);
  if (parts.size() == 2 && parts[0] == "zipf") {
    const auto theta = ToDouble(parts[1], "zipf theta");
    if (theta <= 0 || theta >= 1) throw SpecError{"zipf theta must lie in (0, 1)"};
    return KeyDist{theta};
  }
  throw SpecError{"distribution must be uniform or zipf:THETA, got '" + text + "'"};
}

void
WorkloadSpec::Validate() const
{
  if (threads == 0) throw SpecError{"threads must be positive"};
  if (keys == 0 || keys > UINT32_MAX) throw SpecError{"keys must lie in [1, 2^32)"};
  if (threads > 1024) throw SpecError{"at most 1024 threads"};
  try {
    tree.Validate();
  } catch (const std::invalid_argument &e) {
    throw SpecError{e.what()};
  }
}

/*##############################################################################
 * Stress
 *############################################################################*/

auto
RunStats::Format() const -> std::string
{
  std::ostringstream out;
  out << "ops=" << ops << "\n"
      << "seconds=" << seconds << "\n"
      << "ops_per_sec=" << ops_per_sec << "\n"
      << "cache_hit_ratio=" << cache_hit_ratio << "\n"
      << "consolidations=" << counters.consolidations << "\n"
      << "cnotice_posts=" << counters.cnotice_posts << "\n"
      << "splits=" << counters.splits << "\n"
      << "snotice_posts=" << counters.snotice_posts << "\n"
      << "split_losses=" << counters.split_losses << "\n"
      << "merges=" << counters.merges << "\n"
      << "mnotice_posts=" << counters.mnotice_posts << "\n"
      << "takeovers=" << counters.takeovers << "\n"
      << "root_grows=" << counters.root_grows << "\n"
      << "restarts=" << counters.restarts << "\n"
      << "max_chain=" << counters.max_chain << "\n";
  for (int s = 0; s < sched::kSiteCount; ++s) {
    out << "cas_failures_" << sched::SiteName(static_cast<sched::Site>(s)) << "=" << counters.cas_failures[s] << "\n";
  }
  out << "sentinel_touches=" << sentinel_touches << "\n"
      << "epochs_advanced=" << epochs_advanced << "\n"
      << "reclaimed_during_run=" << reclaimed_during_run << "\n"
      << "final_keys=" << final_keys << "\n"
      << "failures=" << failures.size() << "\n";
  for (const auto &f : failures) out << "failure=" << f << "\n";
  return out.str();
}

auto
RunStress(const WorkloadSpec &spec) -> RunStats
{
  spec.Validate();
  RunStats stats{};
  Tree tree{spec.tree};
  std::unique_ptr<RecordCache> cache;
  if (spec.cache_bytes > 0) {
    RecordCacheOptions opts{};
    opts.buffer_bytes = spec.cache_bytes;
    opts.bucket_count = std::max<size_t>(spec.keys, 2);
    cache = std::make_unique<RecordCache>(opts);
  }

  std::atomic<uint64_t> clock{0};
  std::vector<std::vector<Ack>> logs(spec.threads);
  std::vector<std::string> errors(spec.threads);
  const auto touches_before = SentinelTouches();

  const auto worker = [&](unsigned tid) {
    try {
      const auto quota = spec.ops / spec.threads + (tid < spec.ops % spec.threads ? 1 : 0);
      ZipfGenerator keys{spec.keys, spec.dist.theta, spec.seed * 1000003 + tid};
      std::mt19937_64 rng{spec.seed ^ (0x9E3779B97F4A7C15ULL * (tid + 1))};
      auto &log = logs[tid];
      log.reserve(static_cast<size_t>(static_cast<double>(quota) * (spec.mix.upsert + spec.mix.del)) + 16);
      for (uint64_t i = 0; i < quota; ++i) {
        const auto rank = keys.Next();
        const auto idx = spec.dist.theta > 0 ? Scramble(rank) % spec.keys : rank;
        const auto key = KeyName(idx);
        const auto pick = static_cast<double>(rng() >> 11U) * 0x1.0p-53;
        if (pick < spec.mix.read) {
          if (cache && cache->Get(idx)) continue;
          const auto v = tree.Get(key);
          if (cache && v) cache->Put(idx, *v);
        } else if (pick < spec.mix.read + spec.mix.upsert + spec.mix.del) {
          const bool del = pick >= spec.mix.read + spec.mix.upsert;
          const auto seq = static_cast<uint32_t>(i);
          const auto start = clock.fetch_add(1, std::memory_order_seq_cst);
          if (del) {
            tree.Delete(key);
          } else {
            tree.Upsert(key, ValueName(tid, seq));
          }
          const auto end = clock.fetch_add(1, std::memory_order_seq_cst);
          if (cache) cache->Invalidate(idx);
          log.push_back(Ack{static_cast<uint32_t>(idx), seq, start, end, static_cast<uint16_t>(tid), del});
        } else {
          tree.RangeScan(key, KeyName(std::min(idx + spec.scan_length, spec.keys)));
        }
        if (i % kAdvanceEvery == kAdvanceEvery - 1) {
          tree.Epochs().TryAdvance();
          tree.Epochs().Collect();
        }
      }
    } catch (const std::exception &e) {
      errors[tid] = std::string{"thread "} + std::to_string(tid) + ": " + e.what();
    }
  };

  const auto epoch0 = tree.Epochs().Current();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  threads.reserve(spec.threads);
  for (unsigned t = 0; t < spec.threads; ++t) threads.emplace_back(worker, t);
  for (auto &t : threads) t.join();
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats.ops = spec.ops;
  stats.epochs_advanced = tree.Epochs().Current() - epoch0;
  stats.reclaimed_during_run = tree.Epochs().ReclaimedCount();
  stats.ops_per_sec = stats.seconds > 0 ? static_cast<double>(spec.ops) / stats.seconds : 0;
  if (cache) stats.cache_hit_ratio = cache->Stats().HitRatio();
  for (auto &e : errors) {
    if (!e.empty()) stats.failures.push_back(e);
  }

  tree.Quiesce();
  if (auto v = tree.Validate(true); !v.empty()) stats.failures.push_back("validate: " + v);
  tree.Table().ForEachLive([&](PageId pid, const Element *head) {
    if (head != nullptr && ChainLengthOf(head).data_deltas >= spec.tree.consolidate_threshold) {
      stats.failures.push_back("chain of pid " + std::to_string(pid.index) + " not consolidated at quiescence");
    }
  });

  // acknowledged writes against the final state
  std::unordered_map<uint32_t, std::vector<const Ack *>> by_key;
  for (const auto &log : logs) {
    for (const auto &a : log) by_key[a.key].push_back(&a);
  }
  std::unordered_map<Key, Value> final_state;
  for (auto &r : tree.Snapshot()) final_state.emplace(std::move(r.key), std::move(r.value));
  stats.final_keys = final_state.size();
  size_t mismatches = 0;
  const auto report = [&](const std::string &msg) {
    if (++mismatches <= 10) stats.failures.push_back(msg);
  };
  for (const auto &[idx, acks] : by_key) {
    uint64_t max_start = 0;
    for (const auto *a : acks) max_start = std::max(max_start, a->start);
    const auto key = KeyName(idx);
    const auto it = final_state.find(key);
    bool ok = false;
    for (const auto *a : acks) {
      if (a->end < max_start) continue;  // a later write started after this one returned
      if (a->del ? it == final_state.end() : (it != final_state.end() && it->second == ValueName(a->thread, a->seq))) {
        ok = true;
        break;
      }
    }
    if (!ok) report("key " + key + " holds " + (it == final_state.end() ? "nothing" : it->second) +
                    ", which no last acknowledged write explains");
  }
  for (const auto &[key, value] : final_state) {
    if (!by_key.contains(static_cast<uint32_t>(std::stoull(key.substr(1))))) {
      report("key " + key + " present but never written");
    }
  }
  if (mismatches > 10) stats.failures.push_back(std::to_string(mismatches - 10) + " more mismatches");

  stats.counters = tree.Counters();
  const auto &c = stats.counters;
  if (c.splits > c.snotice_posts) stats.failures.push_back("more splits than sNOTICE posts");
  if (c.consolidations > c.cnotice_posts) stats.failures.push_back("more consolidations than cNOTICE posts");
  if (c.merges > c.mnotice_posts) stats.failures.push_back("more merges than mNOTICE posts");
  if (c.takeovers > c.cnotice_posts + c.snotice_posts + c.mnotice_posts) {
    stats.failures.push_back("more takeovers than notices posted");
  }
  stats.sentinel_touches = SentinelTouches() - touches_before;
  if (stats.sentinel_touches != 0) stats.failures.push_back("reclaimed state was accessed");
  return stats;
}

}  // namespace nkv
