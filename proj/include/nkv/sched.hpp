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

#ifndef NKV_SCHED_HPP
#define NKV_SCHED_HPP

// C++ standard libraries
#include <coroutine>
#include <cstdint>
#include <exception>
#include <optional>
#include <utility>

// local sources
#include "nkv/contract.hpp"

/**
 * Step-machine plumbing.
 *
 * Every tree operation is written as a coroutine that awaits a schedule point
 * immediately before each shared-memory access (a mapping-table read, a CAS,
 * a buffer reservation, ...). With no driver installed on the calling thread
 * the points never suspend and the coroutine runs to completion synchronously,
 * so real threads pay only for the coroutine frame. The interleaving harness
 * installs a driver and resumes the suspended operations one access at a time.
 */
namespace nkv::sched
{
enum class Site : uint8_t {
  kGuardEnter,
  kRootRead,
  kHeadRead,
  kCas,
  kRootCas,
  kReserve,
  kEpochAdvance,
  kOther,
};

inline constexpr int kSiteCount = 8;

auto SiteName(Site site) -> const char *;

/// Receives suspended coroutines; implemented by the harness executor.
class Driver
{
 public:
  virtual ~Driver() = default;
  virtual void Park(std::coroutine_handle<> handle, Site site) = 0;
};

namespace detail
{
inline thread_local Driver *tls_driver = nullptr;
inline thread_local int tls_suppress = 0;
inline thread_local uint32_t tls_site_mask = ~uint32_t{0};
}  // namespace detail

constexpr auto
SiteBit(Site site) -> uint32_t
{
  return uint32_t{1} << static_cast<unsigned>(site);
}

inline constexpr uint32_t kAllSites = ~uint32_t{0};

inline auto
Yielding() noexcept -> bool
{
  return detail::tls_driver != nullptr && detail::tls_suppress == 0;
}

inline auto
Yielding(Site site) noexcept -> bool
{
  return Yielding() && (detail::tls_site_mask & SiteBit(site)) != 0;
}

class ScopedDriver
{
 public:
  /// Points whose site is outside @p site_mask run without suspending.
  explicit ScopedDriver(Driver *driver, uint32_t site_mask = kAllSites)
      : prev_{detail::tls_driver}, prev_mask_{detail::tls_site_mask}
  {
    detail::tls_driver = driver;
    detail::tls_site_mask = site_mask;
  }
  ~ScopedDriver()
  {
    detail::tls_driver = prev_;
    detail::tls_site_mask = prev_mask_;
  }
  ScopedDriver(const ScopedDriver &) = delete;
  auto operator=(const ScopedDriver &) -> ScopedDriver & = delete;

 private:
  Driver *prev_;
  uint32_t prev_mask_;
};

/// Runs enclosed code without suspending, even under a driver (checkers, sync API).
class ScopedNoYield
{
 public:
  ScopedNoYield() { ++detail::tls_suppress; }
  ~ScopedNoYield() { --detail::tls_suppress; }
  ScopedNoYield(const ScopedNoYield &) = delete;
  auto operator=(const ScopedNoYield &) -> ScopedNoYield & = delete;
};

struct Point {
  Site site;

  [[nodiscard]] auto await_ready() const noexcept -> bool { return !Yielding(site); }
  void await_suspend(std::coroutine_handle<> h) const { detail::tls_driver->Park(h, site); }
  void await_resume() const noexcept {}
};

inline auto
At(Site site) -> Point
{
  return Point{site};
}

/// Schedule point whose access is performed on resumption.
template <class Fn>
struct Access {
  Site site;
  Fn fn;

  [[nodiscard]] auto await_ready() const noexcept -> bool { return !Yielding(site); }
  void await_suspend(std::coroutine_handle<> h) const { detail::tls_driver->Park(h, site); }
  auto await_resume() { return fn(); }
};

template <class Fn>
auto
Do(Site site, Fn fn) -> Access<Fn>
{
  return Access<Fn>{site, std::move(fn)};
}

template <class T>
class Task;

namespace detail
{
struct FinalAwaiter {
  [[nodiscard]] auto await_ready() const noexcept -> bool { return false; }

  template <class Promise>
  auto
  await_suspend(std::coroutine_handle<Promise> h) noexcept -> std::coroutine_handle<>
  {
    auto cont = h.promise().continuation;
    if (cont) return cont;
    return std::noop_coroutine();
  }

  void await_resume() const noexcept {}
};

struct PromiseBase {
  std::coroutine_handle<> continuation{};
  std::exception_ptr error{};

  auto initial_suspend() noexcept -> std::suspend_always { return {}; }
  auto final_suspend() noexcept -> FinalAwaiter { return {}; }
  void unhandled_exception() noexcept { error = std::current_exception(); }
};

template <class T>
struct Promise : PromiseBase {
  std::optional<T> value{};

  auto get_return_object() -> Task<T>;
  void return_value(T v) { value.emplace(std::move(v)); }
};

template <>
struct Promise<void> : PromiseBase {
  auto get_return_object() -> Task<void>;
  void return_void() noexcept {}
};
}  // namespace detail

/**
 * @brief A lazily started, awaitable, move-only coroutine task.
 *
 * Awaiting a task starts it with symmetric transfer and resumes the awaiter
 * when it finishes. The task owns its frame; destroying an unfinished task
 * destroys the whole suspended call chain below it.
 */
template <class T = void>
class [[nodiscard]] Task
{
 public:
  using promise_type = detail::Promise<T>;
  using Handle = std::coroutine_handle<promise_type>;

  Task() = default;
  explicit Task(Handle h) : handle_{h} {}
  Task(Task &&other) noexcept : handle_{std::exchange(other.handle_, {})} {}
  auto
  operator=(Task &&other) noexcept -> Task &
  {
    if (this != &other) {
      Reset();
      handle_ = std::exchange(other.handle_, {});
    }
    return *this;
  }
  Task(const Task &) = delete;
  auto operator=(const Task &) -> Task & = delete;
  ~Task() { Reset(); }

  void
  Reset()
  {
    if (handle_) handle_.destroy();
    handle_ = {};
  }

  [[nodiscard]] auto Valid() const -> bool { return static_cast<bool>(handle_); }
  [[nodiscard]] auto Done() const -> bool { return handle_ && handle_.done(); }
  [[nodiscard]] auto GetHandle() const -> Handle { return handle_; }

  void
  RethrowIfError() const
  {
    if (handle_ && handle_.promise().error) std::rethrow_exception(handle_.promise().error);
  }

  auto
  Result() -> T
  {
    RethrowIfError();
    if constexpr (!std::is_void_v<T>) {
      return std::move(*handle_.promise().value);
    }
  }

  struct Awaiter {
    Handle handle;

    [[nodiscard]] auto await_ready() const noexcept -> bool { return false; }
    auto
    await_suspend(std::coroutine_handle<> cont) noexcept -> std::coroutine_handle<>
    {
      handle.promise().continuation = cont;
      return handle;
    }
    auto
    await_resume() -> T
    {
      if (handle.promise().error) std::rethrow_exception(handle.promise().error);
      if constexpr (!std::is_void_v<T>) {
        return std::move(*handle.promise().value);
      }
    }
  };

  auto operator co_await() && noexcept -> Awaiter { return Awaiter{handle_}; }

 private:
  Handle handle_{};
};

namespace detail
{
template <class T>
auto
Promise<T>::get_return_object() -> Task<T>
{
  return Task<T>{std::coroutine_handle<Promise<T>>::from_promise(*this)};
}

inline auto
Promise<void>::get_return_object() -> Task<void>
{
  return Task<void>{std::coroutine_handle<Promise<void>>::from_promise(*this)};
}
}  // namespace detail

/// Drives a task to completion on the calling thread without suspending.
template <class T>
auto
RunSync(Task<T> task) -> T
{
  ScopedNoYield no_yield;
  task.GetHandle().resume();
  NKV_CONTRACT(task.Done(), "task suspended while yielding was disabled");
  return task.Result();
}

}  // namespace nkv::sched

#endif  // NKV_SCHED_HPP
