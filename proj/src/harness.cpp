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

#include "nkv/harness.hpp"

// C++ standard libraries
#include <algorithm>
#include <charconv>
#include <memory>
#include <random>
#include <set>
#include <sstream>

// local sources
#include "nkv/linearizability.hpp"

namespace nkv::sched
{
auto
SiteName(Site site) -> const char *
{
  switch (site) {
    case Site::kGuardEnter:
      return "guard_enter";
    case Site::kRootRead:
      return "root_read";
    case Site::kHeadRead:
      return "head_read";
    case Site::kCas:
      return "cas";
    case Site::kRootCas:
      return "root_cas";
    case Site::kReserve:
      return "reserve";
    case Site::kEpochAdvance:
      return "epoch_advance";
    case Site::kOther:
      return "other";
  }
  return "unknown";
}
}  // namespace nkv::sched

namespace nkv::harness
{
namespace
{
using sched::Site;
using sched::Task;

constexpr uint32_t kNoMachine = ~uint32_t{0};

auto
Fnv(uint64_t h, std::string_view s) -> uint64_t
{
  for (const auto c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  h ^= 0xff;
  return h * 1099511628211ULL;
}

constexpr uint64_t kFnvBasis = 1469598103934665603ULL;

auto
StateHash(Tree &tree) -> uint64_t
{
  sched::ScopedNoYield no_yield;
  auto h = kFnvBasis;
  for (const auto &r : tree.Snapshot()) {
    h = Fnv(h, r.key);
    h = Fnv(h, r.value);
  }
  return Fnv(h, tree.Dump());
}

auto
SamePlan(const MergePlan &a, const MergePlan &b) -> bool
{
  return a.parent == b.parent && a.left == b.left && a.dead == b.dead && a.separator == b.separator;
}

auto
MergeNoticeOf(const Element *head, ElementKind kind, const MergePlan &plan) -> bool
{
  const auto *n = head == nullptr ? nullptr : PendingNotice(head);
  return n != nullptr && n->Kind() == kind && SamePlan(static_cast<const MergeNotice *>(n)->Plan(), plan);
}

auto
OpName(OpKind kind) -> const char *
{
  switch (kind) {
    case OpKind::kGet:
      return "get";
    case OpKind::kUpsert:
      return "upsert";
    case OpKind::kDelete:
      return "delete";
    case OpKind::kScan:
      return "scan";
    case OpKind::kConsolidate:
      return "consolidate";
    case OpKind::kSplit:
      return "split";
    case OpKind::kMerge:
      return "merge";
    case OpKind::kTakeoverAll:
      return "takeover_all";
    case OpKind::kTakeover:
      return "takeover";
    case OpKind::kAdvance:
      return "advance";
    case OpKind::kReserve:
      return "reserve";
    case OpKind::kTouch:
      return "touch";
  }
  return "?";
}

auto
Render(const OpResult &r) -> std::string
{
  std::ostringstream os;
  os << OpName(r.op.kind);
  if (!r.op.key.empty()) os << "(" << r.op.key << ")";
  if (!r.returned) {
    os << " -> <halted>";
    return os.str();
  }
  if (!r.error.empty()) {
    os << " -> error: " << r.error;
    return os.str();
  }
  switch (r.op.kind) {
    case OpKind::kGet:
      os << " -> " << (r.got ? *r.got : std::string{"<absent>"});
      break;
    case OpKind::kScan:
      os << " ->";
      for (const auto &rec : r.scanned) os << " " << rec.key << "=" << rec.value;
      break;
    case OpKind::kUpsert:
    case OpKind::kDelete:
    case OpKind::kTouch:
      os << " -> ok";
      break;
    default:
      os << " -> " << (r.flag ? "true" : "false") << " " << r.number;
      break;
  }
  return os.str();
}

/// Resumes one parked coroutine at a time; used outside a full run.
class Stepper final : public sched::Driver
{
 public:
  void Park(std::coroutine_handle<> handle, Site /*site*/) override { parked_ = handle; }
  auto Take() -> std::coroutine_handle<> { return std::exchange(parked_, {}); }

 private:
  std::coroutine_handle<> parked_{};
};

/// Forwards to the previously installed observer and watches for one kind.
class KindWatch final : public TreeObserver
{
 public:
  KindWatch(TreeObserver *next, ElementKind kind) : next_{next}, kind_{kind} {}

  void
  OnNoticeInstalled(PageId pid, const Notice *notice) override
  {
    if (notice->Kind() == kind_) seen_ = true;
    if (next_ != nullptr) next_->OnNoticeInstalled(pid, notice);
  }

  void
  OnNoticeReplaced(PageId pid, const Notice *notice, const Element *new_head) override
  {
    if (next_ != nullptr) next_->OnNoticeReplaced(pid, notice, new_head);
  }

  [[nodiscard]] auto Seen() const -> bool { return seen_; }
  [[nodiscard]] auto Next() const -> TreeObserver * { return next_; }

 private:
  TreeObserver *next_;
  ElementKind kind_;
  bool seen_{false};
};

struct PlanTrack {
  MergePlan plan;
  bool dead_seen{false};
  bool finished{false};
};

/*##############################################################################
 * One execution of a scenario
 *############################################################################*/

class Run final : public sched::Driver, public TreeObserver
{
 public:
  Run(const ScenarioDef &def, const Options &options) : def_{def}, options_{options}
  {
    def_.config.Validate();
    tree_ = std::make_unique<Tree>(def_.config);
    tree_->SetObserver(this);
    for (const auto &[k, v] : def_.preload) tree_->Upsert(k, v);
    if (def_.setup) def_.setup(*tree_);
    for (auto &r : tree_->Snapshot()) initial_.emplace(std::move(r.key), std::move(r.value));

    const auto n = def_.machines.size();
    tasks_.resize(n);
    parked_.resize(n);
    done_.assign(n, false);
    halted_.assign(n, false);
    installed_.resize(n);
    results_.resize(n);
    stamps_.resize(n);
    for (uint32_t m = 0; m < n; ++m) {
      results_[m].resize(def_.machines[m].ops.size());
      stamps_[m].resize(def_.machines[m].ops.size());
    }
    for (uint32_t m = 0; m < n; ++m) {
      tasks_[m] = Body(m);
      Resume(m, tasks_[m].GetHandle());
    }
    CheckStep();
  }

  Run(const Run &) = delete;
  auto operator=(const Run &) -> Run & = delete;

  ~Run() override
  {
    tree_->SetObserver(nullptr);
    for (auto &t : tasks_) t.Reset();
  }

  [[nodiscard]] auto
  Enabled() const -> std::vector<uint32_t>
  {
    std::vector<uint32_t> out;
    for (uint32_t m = 0; m < tasks_.size(); ++m) {
      if (!done_[m] && !halted_[m]) out.push_back(m);
    }
    return out;
  }

  void
  Step(uint32_t m)
  {
    NKV_CONTRACT(m < tasks_.size() && !done_[m] && !halted_[m], "stepping a finished machine");
    ++step_;
    Resume(m, std::exchange(parked_[m], {}));
    CheckStep();
  }

  void
  Finish(Report &report)
  {
    CheckFinal();
    const auto c = tree_->Counters();
    auto &cov = report.coverage;
    cov["consolidations"] += c.consolidations;
    cov["cnotice_posts"] += c.cnotice_posts;
    cov["cnotice_losses"] += c.cnotice_losses;
    cov["snotice_posts"] += c.snotice_posts;
    cov["split_losses"] += c.split_losses;
    cov["splits"] += c.splits;
    cov["mnotice_posts"] += c.mnotice_posts;
    cov["dnotice_posts"] += c.dnotice_posts;
    cov["xnotice_posts"] += c.xnotice_posts;
    cov["merges"] += c.merges;
    cov["takeovers"] += c.takeovers;
    cov["restarts"] += c.restarts;
    for (int s = 0; s < sched::kSiteCount; ++s) {
      const auto fails = c.cas_failures[static_cast<size_t>(s)];
      if (fails != 0) cov[std::string{"cas_fail_"} + sched::SiteName(static_cast<Site>(s))] += fails;
    }
    for (const auto &[k, v] : coverage_) cov[k] += v;
    report.steps += step_;
    report.final_hash = StateHash(*tree_);
    report.outputs.clear();
    for (uint32_t m = 0; m < results_.size(); ++m) {
      for (const auto &r : results_[m]) report.outputs.push_back(def_.machines[m].name + ": " + Render(r));
    }
  }

  [[nodiscard]] auto Violations() const -> const std::map<std::string, std::string> & { return violations_; }

  /*############################################################################
   * Driver and observer
   *##########################################################################*/

  void
  Park(std::coroutine_handle<> handle, Site /*site*/) override
  {
    parked_[current_] = handle;
  }

  void
  OnNoticeInstalled(PageId pid, const Notice *notice) override
  {
    for (const auto &[key, sum] : pending_) {
      if (key.first == pid && key.second != notice) {
        Violate("winner uniqueness", "pid " + std::to_string(pid.index) + " got a second pending notice (" +
                                         ElementKindName(notice->Kind()) + " over " +
                                         ElementKindName(key.second->Kind()) + ")");
      }
    }
    pending_[{pid, notice}] = ChainChecksum(notice->Next());
    ++coverage_[std::string{"install_"} + ElementKindName(notice->Kind())];
    if (current_ != kNoMachine) {
      installed_[current_].insert(notice->Kind());
      ++coverage_["winner:" + def_.machines[current_].name + ":" + ElementKindName(notice->Kind())];
    }

    switch (notice->Kind()) {
      case ElementKind::kMNotice:
        plans_.push_back(PlanTrack{static_cast<const MergeNotice *>(notice)->Plan()});
        break;
      case ElementKind::kDNotice:
      case ElementKind::kXNotice: {
        const auto &plan = static_cast<const MergeNotice *>(notice)->Plan();
        auto it = std::find_if(plans_.begin(), plans_.end(), [&](const PlanTrack &t) { return SamePlan(t.plan, plan); });
        if (it == plans_.end()) {
          Violate("notice order", std::string{ElementKindName(notice->Kind())} + " posted before the mNOTICE");
        } else if (notice->Kind() == ElementKind::kDNotice) {
          it->dead_seen = true;
        } else if (!it->dead_seen) {
          Violate("notice order", "xNOTICE posted before the dNOTICE");
        }
        break;
      }
      default:
        break;
    }
  }

  void
  OnNoticeReplaced(PageId pid, const Notice *notice, const Element * /*new_head*/) override
  {
    const auto it = pending_.find({pid, notice});
    if (it == pending_.end()) return;
    if (ChainChecksum(notice->Next()) != it->second) {
      Violate("guard inviolability", std::string{"state beneath "} + ElementKindName(notice->Kind()) + " at pid " +
                                         std::to_string(pid.index) + " changed before replacement");
    }
    pending_.erase(it);
  }

 private:
  void
  Resume(uint32_t m, std::coroutine_handle<> handle)
  {
    NKV_CONTRACT(static_cast<bool>(handle), "machine has no parked step");
    current_ = m;
    {
      sched::ScopedDriver driver{this, def_.site_mask};
      handle.resume();
    }
    current_ = kNoMachine;
    if (tasks_[m].Done()) {
      done_[m] = true;
      try {
        tasks_[m].RethrowIfError();
      } catch (const std::exception &e) {
        Violate("machine error", def_.machines[m].name + ": " + e.what());
      }
    } else {
      NKV_CONTRACT(static_cast<bool>(parked_[m]), "machine neither parked nor finished");
      const auto &halt = def_.machines[m].halt_after_notice;
      if (halt && installed_[m].count(*halt) != 0) {
        // the thread dies here; destroying its frames releases its epoch guard
        tasks_[m].Reset();
        parked_[m] = {};
        halted_[m] = true;
      }
    }
  }

  auto
  Body(uint32_t id) -> Task<void>
  {
    const auto &ops = def_.machines[id].ops;
    for (size_t i = 0; i < ops.size(); ++i) {
      auto &res = results_[id][i];
      res.op = ops[i];
      stamps_[id][i].first = step_;
      auto t = Exec(ops[i], res);
      co_await std::move(t);
      stamps_[id][i].second = step_;
      res.returned = true;
    }
  }

  auto
  Resolve(const Op &op) -> PageId
  {
    sched::ScopedNoYield no_yield;
    if (op.level == 0) return tree_->LeafOf(op.key);
    if (tree_->Height() != op.level + 1) throw std::invalid_argument{"only the root can be targeted above the leaves"};
    return tree_->RootPid();
  }

  auto
  Exec(const Op &op, OpResult &res) -> Task<void>
  {
    auto &tree = *tree_;
    try {
      switch (op.kind) {
        case OpKind::kGet: {
          auto t = tree.GetTask(op.key);
          res.got = co_await std::move(t);
          break;
        }
        case OpKind::kUpsert: {
          auto t = tree.UpsertTask(op.key, op.arg);
          co_await std::move(t);
          break;
        }
        case OpKind::kDelete: {
          auto t = tree.DeleteTask(op.key);
          co_await std::move(t);
          break;
        }
        case OpKind::kScan: {
          auto t = tree.ScanTask(op.key, op.arg);
          res.scanned = co_await std::move(t);
          break;
        }
        case OpKind::kConsolidate: {
          const auto pid = Resolve(op);
          auto t = tree.ConsolidateTask(pid);
          res.flag = co_await std::move(t);
          break;
        }
        case OpKind::kSplit: {
          const auto pid = Resolve(op);
          auto t = tree.SplitTask(pid);
          const auto out = co_await std::move(t);
          res.flag = out.posted;
          res.number = out.moved;
          break;
        }
        case OpKind::kMerge: {
          std::optional<MergePlan> plan;
          {
            sched::ScopedNoYield no_yield;
            plan = tree.PlanMergeOf(tree.LeafOf(op.key));
          }
          if (!plan) break;
          const MergePlan given = *plan;
          auto t = tree.MergeTask(given);
          const auto out = co_await std::move(t);
          res.flag = out.started;
          break;
        }
        case OpKind::kTakeoverAll: {
          std::vector<PageId> pids;
          tree.Table().ForEachLive([&](PageId pid, const Element *head) {
            if (head != nullptr) pids.push_back(pid);
          });
          for (const auto pid : pids) {
            auto t = tree.TakeoverTask(pid);
            if (co_await std::move(t)) {
              res.flag = true;
              ++res.number;
            }
          }
          break;
        }
        case OpKind::kTakeover: {
          PageId target{};
          tree.Table().ForEachLive([&](PageId pid, const Element *head) {
            const auto *n = head == nullptr ? nullptr : PendingNotice(head);
            if (!target.Valid() && n != nullptr && n->Kind() == op.notice) target = pid;
          });
          if (!target.Valid()) break;
          auto t = tree.TakeoverTask(target);
          res.flag = co_await std::move(t);
          res.number = res.flag ? 1 : 0;
          break;
        }
        case OpKind::kAdvance: {
          for (uint32_t i = 0; i < op.count; ++i) {
            co_await sched::At(Site::kEpochAdvance);
            const auto before = tree.Epochs().Current();
            tree.Epochs().TryAdvance();
            tree.Epochs().Collect();
            if (tree.Epochs().Current() > before) ++res.number;
          }
          res.flag = res.number == op.count;
          break;
        }
        case OpKind::kReserve: {
          const auto ticket = co_await sched::Do(Site::kReserve, [&] { return tree.Buffer().TryReserve(op.count); });
          if (ticket) {
            res.flag = true;
            res.number = ticket->offset;
            reservations_.emplace_back(ticket->offset, ticket->offset + LogBuffer::Footprint(op.count, 0));
          }
          break;
        }
        case OpKind::kTouch: {
          for (uint32_t i = 0; i < op.count; ++i) co_await sched::At(Site::kOther);
          break;
        }
      }
    } catch (const std::exception &e) {
      res.error = e.what();
    }
  }

  void
  Violate(const std::string &checker, const std::string &message)
  {
    violations_.emplace(checker, message);
  }

  void
  CheckStep()
  {
    sched::ScopedNoYield no_yield;
    auto &tree = *tree_;
    if (auto v = tree.Validate(false); !v.empty()) Violate("structure", "step " + std::to_string(step_) + ": " + v);

    for (const auto &[key, sum] : pending_) {
      if (ChainChecksum(key.second->Next()) != sum) {
        Violate("guard inviolability", std::string{"state beneath "} + ElementKindName(key.second->Kind()) +
                                           " at pid " + std::to_string(key.first.index) + " changed at step " +
                                           std::to_string(step_));
      }
    }

    if (def_.static_keys) {
      std::map<Key, Value> now;
      for (auto &r : tree.Snapshot()) now.emplace(std::move(r.key), std::move(r.value));
      if (now != initial_) Violate("key-set preservation", "records differ at step " + std::to_string(step_));
    }

    CheckPathCoverage();
  }

  /// While a merge is in flight every way into the dying node crosses one of its notices.
  void
  CheckPathCoverage()
  {
    auto &tree = *tree_;
    auto &table = tree.Table();
    auto guard = tree.Epochs().Enter();
    for (auto &track : plans_) {
      if (track.finished) continue;
      const auto &plan = track.plan;
      if (!table.IsLive(plan.dead)) {
        track.finished = true;
        continue;
      }
      const auto *phead = table.IsReadable(plan.parent) ? table.Read(plan.parent) : nullptr;
      const auto *dhead = table.Read(plan.dead);
      if (MergeNoticeOf(phead, ElementKind::kMNotice, plan) || MergeNoticeOf(dhead, ElementKind::kDNotice, plan)) {
        continue;
      }
      bool reachable = false;
      if (phead != nullptr) {
        const auto *pb = BaseOf(phead);
        const auto image = Materialize(phead, pb->Low(), pb->High(), false, std::nullopt, true);
        reachable = image.first_child == plan.dead;
        for (const auto &[sep, child] : image.terms) reachable = reachable || child == plan.dead;
      }
      table.ForEachLive([&](PageId pid, const Element *head) {
        if (head == nullptr || pid == plan.dead) return;
        const auto *b = BaseOf(head);
        if (b->IsData() && b->Side() == plan.dead) reachable = true;
      });
      if (reachable) {
        Violate("notice path coverage", "dying pid " + std::to_string(plan.dead.index) +
                                            " reachable without crossing a merge notice at step " +
                                            std::to_string(step_));
      }
    }
  }

  void
  CheckFinal()
  {
    sched::ScopedNoYield no_yield;
    auto &tree = *tree_;
    std::map<Key, Value> final_state;
    for (auto &r : tree.Snapshot()) final_state.emplace(std::move(r.key), std::move(r.value));

    if (def_.linearizable) {
      std::vector<lin::HistoryOp> history;
      for (uint32_t m = 0; m < results_.size(); ++m) {
        for (size_t i = 0; i < results_[m].size(); ++i) {
          const auto &r = results_[m][i];
          lin::HistoryOp h;
          switch (def_.machines[m].ops[i].kind) {
            case OpKind::kGet:
              h.kind = lin::OpKind::kGet;
              break;
            case OpKind::kUpsert:
              h.kind = lin::OpKind::kUpsert;
              break;
            case OpKind::kDelete:
              h.kind = lin::OpKind::kDelete;
              break;
            case OpKind::kScan:
              h.kind = lin::OpKind::kScan;
              break;
            default:
              continue;
          }
          if (!stamps_[m][i].first) continue;  // never started
          h.thread = static_cast<int>(m);
          h.key = def_.machines[m].ops[i].key;
          h.high = def_.machines[m].ops[i].arg;
          h.value = def_.machines[m].ops[i].arg;
          h.invoke = *stamps_[m][i].first;
          h.response = stamps_[m][i].second;
          h.got = r.got;
          h.scanned = r.scanned;
          history.push_back(std::move(h));
        }
      }
      const auto result = lin::Check(history, initial_, final_state);
      if (!result.ok) Violate("linearizability", result.message);
    }

    for (uint32_t m = 0; m < results_.size(); ++m) {
      for (const auto &r : results_[m]) {
        if (r.op.kind == OpKind::kSplit && r.returned && !r.flag && r.number != 0) {
          Violate("loser moved data", def_.machines[m].name + " moved " + std::to_string(r.number) + " records");
        }
      }
    }

    auto regions = reservations_;
    std::sort(regions.begin(), regions.end());
    for (size_t i = 1; i < regions.size(); ++i) {
      if (regions[i].first < regions[i - 1].second) Violate("reservation disjointness", "reserved regions overlap");
    }

    if (def_.final_check) {
      const RunView view{tree, results_, halted_};
      if (auto msg = def_.final_check(view); !msg.empty()) Violate("scenario", msg);
    }
    if (options_.broken_checker) Violate("self-test", "deliberately failing checker");
  }

  const ScenarioDef &def_;
  const Options &options_;
  std::unique_ptr<Tree> tree_;
  std::map<Key, Value> initial_{};
  std::vector<Task<void>> tasks_{};
  std::vector<std::coroutine_handle<>> parked_{};
  std::vector<bool> done_{};
  std::vector<bool> halted_{};
  std::vector<std::set<ElementKind>> installed_{};
  std::vector<std::vector<OpResult>> results_{};
  std::vector<std::vector<std::pair<std::optional<uint64_t>, std::optional<uint64_t>>>> stamps_{};
  std::vector<std::pair<uint64_t, uint64_t>> reservations_{};
  std::map<std::pair<PageId, const Notice *>, uint64_t> pending_{};
  std::vector<PlanTrack> plans_{};
  std::map<std::string, uint64_t> coverage_{};
  std::map<std::string, std::string> violations_{};
  uint32_t current_{kNoMachine};
  uint64_t step_{0};
};

/// Chooses the next machine given the enabled set and the current depth.
using Chooser = std::function<uint32_t(const std::vector<uint32_t> &, size_t)>;

struct Trace {
  Schedule taken;
  std::vector<std::vector<uint32_t>> enabled;
};

auto
Execute(const ScenarioDef &def, const Options &options, const Chooser &choose, Report &report) -> Trace
{
  Trace trace;
  Run run{def, options};
  for (auto en = run.Enabled(); !en.empty(); en = run.Enabled()) {
    const auto depth = trace.taken.size();
    const auto pick = depth < def.prefix.size() ? def.prefix[depth] : choose(en, depth);
    if (std::find(en.begin(), en.end(), pick) == en.end()) {
      throw ScheduleError{"machine " + std::to_string(pick) + " is not runnable at step " + std::to_string(depth)};
    }
    trace.enabled.push_back(std::move(en));
    trace.taken.push_back(pick);
    run.Step(pick);
  }
  run.Finish(report);

  ++report.schedules;
  report.schedule_digest += Fnv(kFnvBasis, FormatSchedule(trace.taken));
  report.last_schedule = trace.taken;
  if (!run.Violations().empty()) {
    for (const auto &[checker, message] : run.Violations()) {
      ++report.violation_count;
      auto it = std::find_if(report.violations.begin(), report.violations.end(),
                             [&](const Violation &v) { return v.checker == checker; });
      if (it == report.violations.end()) {
        report.violations.push_back(Violation{checker, message, trace.taken});
      } else if (trace.taken.size() < it->schedule.size()) {
        *it = Violation{checker, message, trace.taken};
      }
    }
  }
  return trace;
}
}  // namespace

/*##############################################################################
 * Public entry points
 *############################################################################*/

auto
FormatSchedule(const Schedule &schedule) -> std::string
{
  std::string out;
  for (size_t i = 0; i < schedule.size(); ++i) {
    if (i != 0) out += ' ';
    out += std::to_string(schedule[i]);
  }
  return out;
}

auto
ParseSchedule(std::string_view text) -> Schedule
{
  Schedule out;
  size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r') {
      ++pos;
      continue;
    }
    uint32_t v = 0;
    const auto *first = text.data() + pos;
    const auto *last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || (ptr != last && *ptr != ' ' && *ptr != '\t' && *ptr != '\n' && *ptr != '\r')) {
      throw ScheduleError{"malformed schedule near offset " + std::to_string(pos)};
    }
    out.push_back(v);
    pos = static_cast<size_t>(ptr - text.data());
  }
  return out;
}

auto
Report::Format() const -> std::string
{
  std::ostringstream os;
  os << "scenario " << scenario << ": schedules=" << schedules << " steps=" << steps
     << " violations=" << violation_count << "\n";
  os << "  coverage:";
  for (const auto &[k, v] : coverage) os << " " << k << "=" << v;
  os << "\n";
  for (const auto &v : violations) {
    os << "  violation [" << v.checker << "] " << v.message << "\n";
    os << "    schedule: " << FormatSchedule(v.schedule) << "\n";
  }
  return os.str();
}

auto
ExploreExhaustive(const ScenarioDef &scenario, const Options &options) -> Report
{
  Report report;
  report.scenario = scenario.name;
  Schedule forced = scenario.prefix;
  for (;;) {
    if (report.schedules >= options.bound) {
      throw ExplosionError{"scenario " + scenario.name + " exceeds " + std::to_string(options.bound) +
                           " interleavings"};
    }
    const auto trace = Execute(
        scenario, options,
        [&](const std::vector<uint32_t> &en, size_t depth) { return depth < forced.size() ? forced[depth] : en.front(); },
        report);

    // deepest choice point with an untried alternative
    std::optional<size_t> branch;
    for (size_t i = trace.taken.size(); i-- > scenario.prefix.size();) {
      const auto &en = trace.enabled[i];
      if (trace.taken[i] != en.back()) {
        branch = i;
        break;
      }
    }
    if (!branch) break;
    const auto &en = trace.enabled[*branch];
    const auto next = *std::upper_bound(en.begin(), en.end(), trace.taken[*branch]);
    forced.assign(trace.taken.begin(), trace.taken.begin() + static_cast<std::ptrdiff_t>(*branch));
    forced.push_back(next);
  }
  return report;
}

auto
ExploreRandom(const ScenarioDef &scenario, uint64_t schedules, uint64_t seed, const Options &options) -> Report
{
  Report report;
  report.scenario = scenario.name;
  std::mt19937_64 rng{seed};
  for (uint64_t i = 0; i < schedules; ++i) {
    Execute(
        scenario, options,
        [&](const std::vector<uint32_t> &en, size_t) {
          std::uniform_int_distribution<size_t> pick{0, en.size() - 1};
          return en[pick(rng)];
        },
        report);
  }
  return report;
}

auto
Replay(const ScenarioDef &scenario, const Schedule &schedule, const Options &options) -> Report
{
  Report report;
  report.scenario = scenario.name;
  const auto trace = Execute(
      scenario, options,
      [&](const std::vector<uint32_t> &, size_t depth) {
        if (depth >= schedule.size()) {
          throw ScheduleError{"schedule ends after " + std::to_string(schedule.size()) +
                              " steps but machines are still runnable"};
        }
        return schedule[depth];
      },
      report);
  if (trace.taken.size() != schedule.size()) {
    throw ScheduleError{"schedule has " + std::to_string(schedule.size()) + " steps but the run took " +
                        std::to_string(trace.taken.size())};
  }
  return report;
}

auto
RunSequential(const ScenarioDef &scenario, const Options &options) -> Report
{
  Report report;
  report.scenario = scenario.name;
  Execute(scenario, options, [](const std::vector<uint32_t> &en, size_t) { return en.front(); }, report);
  return report;
}

auto
HaltAfterNotice(Tree &tree, Task<void> task, ElementKind kind) -> bool
{
  KindWatch watch{tree.Observer(), kind};
  tree.SetObserver(&watch);
  Stepper stepper;
  auto handle = std::coroutine_handle<>{task.GetHandle()};
  bool halted = false;
  while (handle) {
    {
      sched::ScopedDriver driver{&stepper};
      handle.resume();
    }
    if (task.Done()) break;
    if (watch.Seen()) {
      task.Reset();
      halted = true;
      break;
    }
    handle = stepper.Take();
  }
  tree.SetObserver(watch.Next());
  return halted;
}

}  // namespace nkv::harness
