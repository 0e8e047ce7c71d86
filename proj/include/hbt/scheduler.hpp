#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <hbt/contract.hpp>

namespace hbt::sched {

using thunk = std::function<void()>;

class TaskRef;

enum class TaskState : std::uint8_t { Created, Ready, Running, Done };

/*---------------------------------------------------------------------*/
/* Tasks */

/// A heap-allocated thunk plus a counter of unresolved incoming edges.
///
/// Lifetime is reference counted: one reference per TaskRef handle, one per
/// unresolved incoming edge, and one while the task sits in a ready queue.
/// Code holding only a raw `Task*` (a KPBranch frame, say) relies on the
/// edge it is about to resolve to keep the task alive.
class Task {
public:
  Task(const Task&) = delete;
  auto operator=(const Task&) -> Task& = delete;

  auto state() const -> TaskState { return state_.load(std::memory_order_acquire); }
  auto pending() const -> std::int64_t { return pending_.load(std::memory_order_acquire); }

private:
  friend class TaskRef;
  friend class WorkerPool;
  friend auto new_task(thunk f) -> TaskRef;
  friend auto add_dependency(Task& k) -> void;
  friend auto fork(const TaskRef& c, Task& k) -> void;
  friend auto join(Task& j) -> void;

  explicit Task(thunk f) : body_(std::move(f)) { }

  auto retain() -> void { refs_.fetch_add(1, std::memory_order_relaxed); }
  auto release() -> void {
    if (refs_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      delete this;
    }
  }

  thunk body_;
  std::atomic<std::int64_t> pending_{0};
  std::atomic<std::int64_t> refs_{1};
  std::atomic<TaskState> state_{TaskState::Created};
};

/// Owning handle to a Task.
class TaskRef {
public:
  TaskRef() = default;
  TaskRef(const TaskRef& other) : task_(other.task_) { if (task_) task_->retain(); }
  TaskRef(TaskRef&& other) noexcept : task_(std::exchange(other.task_, nullptr)) { }
  auto operator=(TaskRef other) noexcept -> TaskRef& { std::swap(task_, other.task_); return *this; }
  ~TaskRef() { if (task_) task_->release(); }

  auto get() const -> Task* { return task_; }
  auto operator->() const -> Task* { return task_; }
  auto operator*() const -> Task& { return *task_; }
  explicit operator bool() const { return task_ != nullptr; }

private:
  friend auto new_task(thunk f) -> TaskRef;
  friend class WorkerPool;
  explicit TaskRef(Task* t) : task_(t) { }

  Task* task_ = nullptr;
};

// Returns a Created task that runs `f` once scheduled. Created tasks are
// inert: a task that is never forked or joined never runs.
auto new_task(thunk f) -> TaskRef;

// Registers an edge from `c` to `k` and marks `c` ready on the calling
// worker's queue. `c` must be Created; `k` must not have been scheduled.
auto fork(const TaskRef& c, Task& k) -> void;

// Registers an incoming edge on `k` without a child task, for an edge that
// the caller itself will resolve with join.
auto add_dependency(Task& k) -> void;

// Resolves one incoming edge of `j`; the last one schedules `j`. Writes made
// before the call are visible to `j` when it runs.
auto join(Task& j) -> void;

/// Direct fork-join expressed through new_task/fork/join: `k` runs after
/// both branches have called join on the task handed to them.
auto fork2join(std::function<void(Task&)> f0, std::function<void(Task&)> f1, thunk k) -> void;

/*---------------------------------------------------------------------*/
/* Instrumentation */

struct Counters {
  std::uint64_t tasks_created = 0;
  std::uint64_t joins = 0;
  std::uint64_t promotions = 0;
  std::uint64_t heartbeat_fires = 0;
  std::uint64_t steals = 0;
  std::uint64_t loop_trips = 0;

  auto operator+=(const Counters& o) -> Counters& {
    tasks_created += o.tasks_created;
    joins += o.joins;
    promotions += o.promotions;
    heartbeat_fires += o.heartbeat_fires;
    steals += o.steals;
    loop_trips += o.loop_trips;
    return *this;
  }
  friend auto operator==(const Counters&, const Counters&) -> bool = default;
};

/*---------------------------------------------------------------------*/
/* Heartbeat */

/// Fires once every `period` calls: the first true is on call `period`.
class HeartbeatClock {
public:
  explicit HeartbeatClock(std::uint64_t period) : period_(period), remaining_(period) {
    if (period == 0) {
      throw std::invalid_argument("heartbeat period must be >= 1");
    }
  }

  auto beat() -> bool {
    if (--remaining_ == 0) {
      remaining_ = period_;
      return true;
    }
    return false;
  }
  auto reset() -> void { remaining_ = period_; }
  auto period() const -> std::uint64_t { return period_; }
  // Calls left until the next true.
  auto remaining() const -> std::uint64_t { return remaining_; }

private:
  std::uint64_t period_;
  std::uint64_t remaining_;
};

/*---------------------------------------------------------------------*/
/* Worker pool */

class deadlock_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct PoolOptions {
  unsigned workers = 1;
  std::uint64_t heartbeat = 512;
  std::uint64_t seed = 0;
  std::size_t stack_bytes = std::size_t(8) << 20;
};

struct Worker;

/// Fixed set of worker threads, each with a Chase-Lev ready queue and its
/// own heartbeat clock. Idle workers steal from uniformly random victims and
/// park when nothing is runnable.
class WorkerPool {
public:
  explicit WorkerPool(PoolOptions options);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  auto operator=(const WorkerPool&) -> WorkerPool& = delete;

  /// Schedules `root` (which must be Created) and blocks until every task it
  /// transitively made ready has finished. Rethrows the first exception
  /// escaping a task; throws deadlock_error if the pool went quiet while
  /// some task still had unresolved edges. One run at a time.
  auto run_to_completion(TaskRef root) -> void;

  auto workers() const -> unsigned { return options_.workers; }
  auto heartbeat_period() const -> std::uint64_t { return options_.heartbeat; }

  // Sum over workers since the last reset. Only meaningful between runs.
  auto counters() const -> Counters;
  auto worker_counters() const -> std::vector<Counters>;
  auto reset_counters() -> void;

private:
  friend struct Worker;
  friend auto add_dependency(Task& k) -> void;
  friend auto fork(const TaskRef& c, Task& k) -> void;
  friend auto join(Task& j) -> void;

  auto worker_loop(Worker& w) -> void;
  auto find_work(Worker& w) -> Task*;
  auto execute(Worker& w, Task* t) -> void;
  auto make_ready(Worker& w, Task* t) -> void;
  auto park(Worker& w) -> void;
  auto wake_one() -> void;
  auto has_visible_work() const -> bool;

  PoolOptions options_;
  std::vector<std::unique_ptr<Worker>> workers_;

  std::atomic<Task*> inbox_{nullptr};
  alignas(64) std::atomic<std::int64_t> active_{0};
  alignas(64) std::atomic<std::int64_t> blocked_{0};
  alignas(64) std::atomic<std::uint32_t> epoch_{0};
  std::atomic<std::int32_t> sleepers_{0};
  std::atomic<bool> finished_{false};
  std::atomic<bool> shutdown_{false};

  std::mutex run_mutex_;
  std::mutex error_mutex_;
  std::exception_ptr error_;
};

// Valid only on a worker thread (contract violation elsewhere).
auto this_worker_clock() -> HeartbeatClock&;

// The calling worker's counters; a per-thread scratch record off the pool.
auto this_worker_counters() -> Counters&;

// Index of the calling worker, if the caller is one.
auto current_worker_id() -> std::optional<unsigned>;

} // namespace hbt::sched
